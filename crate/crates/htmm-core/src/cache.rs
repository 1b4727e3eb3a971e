//! On-disk cache for the offline stage: cell-function tables and homogenized
//! tensors, keyed by a content hash of (material, cell mesh, grid).
//!
//! Layout per key: `<cache_dir>/<key>/meta.json` plus `cells.bin` (general
//! path) or `star.bin` (scale-separated path). Binary files are flat
//! little-endian f64 arrays in a fixed family order.

use crate::cell::{FirstOrderCellSet, HomogPoint, SecondOrderCellSet, SeparatedSecondOrderSet};
use crate::error::{Error, Result};
use crate::homogenize::{CellTable, RepresentativeGrid, SeparatedTable};
use crate::tensor::{ElasticTensor, Mat2};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CacheMeta {
    pub schema_version: u32,
    pub key: String,
    pub path_kind: String,
    pub cell_nodes: usize,
    pub grid_n_rep: [usize; 2],
    pub grid_origin: [f64; 2],
    pub grid_extent: [f64; 2],
}

/// Content hash over an arbitrary serializable description.
pub fn content_key<T: Serialize>(desc: &T) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(desc).expect("cache key serialization");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(16);
    for b in digest.iter().take(8) {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

fn write_f64s(out: &mut impl Write, data: &[f64]) -> Result<()> {
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(inp: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    inp.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_mat2(out: &mut impl Write, m: &Mat2) -> Result<()> {
    write_f64s(out, &[m.0[0][0], m.0[0][1], m.0[1][0], m.0[1][1]])
}

fn read_mat2(inp: &mut impl Read) -> Result<Mat2> {
    let v = read_f64s(inp, 4)?;
    Ok(Mat2([[v[0], v[1]], [v[2], v[3]]]))
}

fn write_elast(out: &mut impl Write, d: &ElasticTensor) -> Result<()> {
    let flat: Vec<f64> = d.0.iter().flatten().copied().collect();
    write_f64s(out, &flat)
}

fn read_elast(inp: &mut impl Read) -> Result<ElasticTensor> {
    let v = read_f64s(inp, 9)?;
    let mut d = ElasticTensor::zero();
    for a in 0..3 {
        for b in 0..3 {
            d.0[a][b] = v[3 * a + b];
        }
    }
    Ok(d)
}

fn write_homog(out: &mut impl Write, h: &HomogPoint) -> Result<()> {
    write_mat2(out, &h.k)?;
    write_mat2(out, &h.g)?;
    write_elast(out, &h.d)?;
    write_mat2(out, &h.a)?;
    write_mat2(out, &h.b)
}

fn read_homog(inp: &mut impl Read) -> Result<HomogPoint> {
    Ok(HomogPoint {
        k: read_mat2(inp)?,
        g: read_mat2(inp)?,
        d: read_elast(inp)?,
        a: read_mat2(inp)?,
        b: read_mat2(inp)?,
    })
}

fn write_first(out: &mut impl Write, s: &FirstOrderCellSet) -> Result<()> {
    for a in 0..2 {
        write_f64s(out, &s.h[a])?;
        write_f64s(out, &s.l[a])?;
    }
    for a in 0..2 {
        for h in 0..2 {
            write_f64s(out, &s.chi[a][h])?;
        }
    }
    write_f64s(out, &s.m)?;
    write_f64s(out, &s.n)
}

fn read_first(inp: &mut impl Read, nn: usize) -> Result<FirstOrderCellSet> {
    let mut h: [Vec<f64>; 2] = Default::default();
    let mut l: [Vec<f64>; 2] = Default::default();
    for a in 0..2 {
        h[a] = read_f64s(inp, nn)?;
        l[a] = read_f64s(inp, nn)?;
    }
    let mut chi: [[Vec<f64>; 2]; 2] = Default::default();
    for a in 0..2 {
        for hh in 0..2 {
            chi[a][hh] = read_f64s(inp, 2 * nn)?;
        }
    }
    Ok(FirstOrderCellSet {
        h,
        l,
        chi,
        m: read_f64s(inp, 2 * nn)?,
        n: read_f64s(inp, 2 * nn)?,
    })
}

fn write_second(out: &mut impl Write, s: &SecondOrderCellSet) -> Result<()> {
    for a1 in 0..2 {
        for a2 in 0..2 {
            write_f64s(out, &s.h2[a1][a2])?;
            write_f64s(out, &s.l2[a1][a2])?;
        }
        write_f64s(out, &s.r[a1])?;
        write_f64s(out, &s.s[a1])?;
    }
    for a1 in 0..2 {
        for a2 in 0..2 {
            for h in 0..2 {
                write_f64s(out, &s.p[a1][a2][h])?;
            }
        }
        for h in 0..2 {
            write_f64s(out, &s.q[a1][h])?;
        }
        write_f64s(out, &s.z[a1])?;
        write_f64s(out, &s.g[a1])?;
    }
    write_f64s(out, &s.w)?;
    write_f64s(out, &s.f)
}

fn read_second(inp: &mut impl Read, nn: usize) -> Result<SecondOrderCellSet> {
    let mut h2: [[Vec<f64>; 2]; 2] = Default::default();
    let mut l2: [[Vec<f64>; 2]; 2] = Default::default();
    let mut r: [Vec<f64>; 2] = Default::default();
    let mut sv: [Vec<f64>; 2] = Default::default();
    for a1 in 0..2 {
        for a2 in 0..2 {
            h2[a1][a2] = read_f64s(inp, nn)?;
            l2[a1][a2] = read_f64s(inp, nn)?;
        }
        r[a1] = read_f64s(inp, nn)?;
        sv[a1] = read_f64s(inp, nn)?;
    }
    let mut p: [[[Vec<f64>; 2]; 2]; 2] = Default::default();
    let mut q: [[Vec<f64>; 2]; 2] = Default::default();
    let mut z: [Vec<f64>; 2] = Default::default();
    let mut g: [Vec<f64>; 2] = Default::default();
    for a1 in 0..2 {
        for a2 in 0..2 {
            for h in 0..2 {
                p[a1][a2][h] = read_f64s(inp, 2 * nn)?;
            }
        }
        for h in 0..2 {
            q[a1][h] = read_f64s(inp, 2 * nn)?;
        }
        z[a1] = read_f64s(inp, 2 * nn)?;
        g[a1] = read_f64s(inp, 2 * nn)?;
    }
    Ok(SecondOrderCellSet {
        h2,
        r,
        l2,
        s: sv,
        p,
        q,
        w: read_f64s(inp, 2 * nn)?,
        z,
        f: read_f64s(inp, 2 * nn)?,
        g,
    })
}

fn write_sep_second(out: &mut impl Write, s: &SeparatedSecondOrderSet) -> Result<()> {
    for a1 in 0..2 {
        for a2 in 0..2 {
            write_f64s(out, &s.h2[a1][a2])?;
            write_f64s(out, &s.l2[a1][a2])?;
            write_f64s(out, &s.r2[a1][a2])?;
            write_f64s(out, &s.s2[a1][a2])?;
            for h in 0..2 {
                write_f64s(out, &s.p[a1][a2][h])?;
                write_f64s(out, &s.q2[a1][a2][h])?;
            }
        }
        write_f64s(out, &s.w1[a1])?;
        write_f64s(out, &s.z[a1])?;
        write_f64s(out, &s.f1[a1])?;
        write_f64s(out, &s.g[a1])?;
    }
    Ok(())
}

fn read_sep_second(inp: &mut impl Read, nn: usize) -> Result<SeparatedSecondOrderSet> {
    let mut s = SeparatedSecondOrderSet {
        h2: Default::default(),
        r2: Default::default(),
        l2: Default::default(),
        s2: Default::default(),
        p: Default::default(),
        q2: Default::default(),
        w1: Default::default(),
        z: Default::default(),
        f1: Default::default(),
        g: Default::default(),
    };
    for a1 in 0..2 {
        for a2 in 0..2 {
            s.h2[a1][a2] = read_f64s(inp, nn)?;
            s.l2[a1][a2] = read_f64s(inp, nn)?;
            s.r2[a1][a2] = read_f64s(inp, nn)?;
            s.s2[a1][a2] = read_f64s(inp, nn)?;
            for h in 0..2 {
                s.p[a1][a2][h] = read_f64s(inp, 2 * nn)?;
                s.q2[a1][a2][h] = read_f64s(inp, 2 * nn)?;
            }
        }
        s.w1[a1] = read_f64s(inp, 2 * nn)?;
        s.z[a1] = read_f64s(inp, 2 * nn)?;
        s.f1[a1] = read_f64s(inp, 2 * nn)?;
        s.g[a1] = read_f64s(inp, 2 * nn)?;
    }
    Ok(s)
}

pub fn cache_dir(root: &Path, key: &str) -> PathBuf {
    root.join(key)
}

pub fn has_cell_table(root: &Path, key: &str) -> bool {
    let dir = cache_dir(root, key);
    dir.join("meta.json").is_file() && dir.join("cells.bin").is_file()
}

pub fn has_separated_table(root: &Path, key: &str) -> bool {
    let dir = cache_dir(root, key);
    dir.join("meta.json").is_file() && dir.join("star.bin").is_file()
}

pub fn store_cell_table(root: &Path, key: &str, table: &CellTable, cell_nodes: usize) -> Result<()> {
    let dir = cache_dir(root, key);
    std::fs::create_dir_all(&dir)?;
    let meta = CacheMeta {
        schema_version: SCHEMA_VERSION,
        key: key.to_string(),
        path_kind: "general".into(),
        cell_nodes,
        grid_n_rep: table.grid.n_rep,
        grid_origin: table.grid.origin,
        grid_extent: table.grid.extent,
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("cells.bin"))?);
    for i in 0..table.grid.len() {
        write_homog(&mut out, &table.homog[i])?;
        write_first(&mut out, &table.first[i])?;
        write_second(&mut out, &table.second[i])?;
    }
    Ok(())
}

pub fn load_cell_table(root: &Path, key: &str, cell_nodes: usize) -> Result<CellTable> {
    let dir = cache_dir(root, key);
    let meta: CacheMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)
        .map_err(|e| Error::Cache(format!("bad cache meta: {e}")))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(Error::Cache(format!(
            "cache schema {} incompatible with {}",
            meta.schema_version, SCHEMA_VERSION
        )));
    }
    if meta.cell_nodes != cell_nodes {
        return Err(Error::Cache(format!(
            "cache built for {} cell nodes, expected {}",
            meta.cell_nodes, cell_nodes
        )));
    }
    let grid = RepresentativeGrid::new(meta.grid_origin, meta.grid_extent, meta.grid_n_rep)?;
    let mut inp = std::io::BufReader::new(std::fs::File::open(dir.join("cells.bin"))?);
    let mut homog = Vec::with_capacity(grid.len());
    let mut first = Vec::with_capacity(grid.len());
    let mut second = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        homog.push(read_homog(&mut inp)?);
        first.push(read_first(&mut inp, cell_nodes)?);
        second.push(read_second(&mut inp, cell_nodes)?);
    }
    Ok(CellTable {
        grid,
        first,
        second,
        homog,
    })
}

pub fn store_separated_table(
    root: &Path,
    key: &str,
    table: &SeparatedTable,
    cell_nodes: usize,
) -> Result<()> {
    let dir = cache_dir(root, key);
    std::fs::create_dir_all(&dir)?;
    let meta = CacheMeta {
        schema_version: SCHEMA_VERSION,
        key: key.to_string(),
        path_kind: "separated".into(),
        cell_nodes,
        grid_n_rep: [1, 1],
        grid_origin: [0.0, 0.0],
        grid_extent: [1.0, 1.0],
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("star.bin"))?);
    write_homog(&mut out, &table.homog_star)?;
    write_first(&mut out, &table.first)?;
    write_sep_second(&mut out, &table.second)
}

pub fn load_separated_table(root: &Path, key: &str, cell_nodes: usize) -> Result<SeparatedTable> {
    let dir = cache_dir(root, key);
    let meta: CacheMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)
        .map_err(|e| Error::Cache(format!("bad cache meta: {e}")))?;
    if meta.cell_nodes != cell_nodes || meta.schema_version != SCHEMA_VERSION {
        return Err(Error::Cache("incompatible star cache".into()));
    }
    let mut inp = std::io::BufReader::new(std::fs::File::open(dir.join("star.bin"))?);
    Ok(SeparatedTable {
        homog_star: read_homog(&mut inp)?,
        first: read_first(&mut inp, cell_nodes)?,
        second: read_sep_second(&mut inp, cell_nodes)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::CellSolver;
    use crate::homogenize::{build_cell_table, build_separated_table};
    use crate::material::test_models::product_model;
    use crate::mesh::build_unit_cell_mesh;

    #[test]
    fn cell_table_round_trip_is_bitwise() {
        let model = product_model("sine4pi");
        let solver = CellSolver::new(build_unit_cell_mesh(6, model.inclusion_geometry).unwrap());
        let grid = RepresentativeGrid::new([0.0, 0.0], [1.0, 1.0], [3, 2]).unwrap();
        let table = build_cell_table(&solver, &model, &grid).unwrap();
        let dir = std::env::temp_dir().join("htmm_cache_test");
        let _ = std::fs::remove_dir_all(&dir);
        let key = content_key(&("round-trip", 6usize));
        assert!(!has_cell_table(&dir, &key));
        store_cell_table(&dir, &key, &table, solver.n_nodes()).unwrap();
        assert!(has_cell_table(&dir, &key));
        let loaded = load_cell_table(&dir, &key, solver.n_nodes()).unwrap();
        assert_eq!(table.first, loaded.first);
        assert_eq!(table.second, loaded.second);
        for (a, b) in table.homog.iter().zip(&loaded.homog) {
            assert_eq!(a, b);
        }
        // wrong node count is rejected
        assert!(load_cell_table(&dir, &key, 99).is_err());
    }

    #[test]
    fn separated_table_round_trip() {
        let model = product_model("sine4pi");
        let solver = CellSolver::new(build_unit_cell_mesh(6, model.inclusion_geometry).unwrap());
        let table = build_separated_table(&solver, &model).unwrap();
        let dir = std::env::temp_dir().join("htmm_cache_test_sep");
        let _ = std::fs::remove_dir_all(&dir);
        let key = content_key(&"sep");
        store_separated_table(&dir, &key, &table, solver.n_nodes()).unwrap();
        assert!(has_separated_table(&dir, &key));
        let loaded = load_separated_table(&dir, &key, solver.n_nodes()).unwrap();
        assert_eq!(table.first, loaded.first);
        assert_eq!(table.second, loaded.second);
    }

    #[test]
    fn keys_differ_across_descriptions() {
        let k1 = content_key(&("model-a", 20));
        let k2 = content_key(&("model-b", 20));
        assert_ne!(k1, k2);
        assert_eq!(k1.len(), 16);
    }
}
