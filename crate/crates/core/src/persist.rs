//! Versioned binary persistence for parameter stores, plus save/load
//! wrappers for models, classifier banks and priors.
//!
//! # Weight file layout (version 1, all integers little-endian)
//!
//! ```text
//! offset  size  field
//! 0       4     magic bytes "CWWF"
//! 4       4     format version, u32 = 1
//! 8       8     schema hash, u64 (FNV-1a of the schema's canonical text;
//!               0 when the artifact is not bound to a schema)
//! 16      4     entry count, u32
//! ----    ----  per entry:
//!         4     name length, u32
//!         n     name, UTF-8
//!         4     ndim, u32 (always 2: rows, cols)
//!         16    dims, u64 each
//!         8     element offset into the value section, u64
//! ----    ----  then:
//!         8     value count, u64
//!         8*vc  values, f64 little-endian bits
//! ```
//!
//! Entries appear in registration order and their (offset, len) ranges
//! tile the value section exactly.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::autodiff::ParamStore;
use crate::classifier::ClassifierBank;
use crate::data::DatasetSchema;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::EncoderDecoder;
use crate::prior::{GmmModel, KdeModel, PriorModel};

const MAGIC: &[u8; 4] = b"CWWF";
const VERSION: u32 = 1;

pub fn save_store(store: &ParamStore, schema_hash: u64, path: &Path) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&schema_hash.to_le_bytes()).map_err(io_err)?;
    let names = store.names();
    w.write_all(&(names.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for name in names {
        let info = store.info(name)?;
        w.write_all(&(name.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&2u32.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(info.rows as u64).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(&(info.cols as u64).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(&(info.offset as u64).to_le_bytes())
            .map_err(io_err)?;
    }
    w.write_all(&(store.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for v in store.values() {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

pub fn load_store(path: &Path) -> Result<(ParamStore, u64)> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut r = std::io::BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Persist(format!(
            "{}: not a weight file (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r, path)?;
    if version != VERSION {
        return Err(Error::Persist(format!(
            "unsupported weight file version {version}"
        )));
    }
    let schema_hash = read_u64(&mut r, path)?;
    let entries = read_u32(&mut r, path)? as usize;
    let mut directory = Vec::with_capacity(entries);
    for _ in 0..entries {
        let name_len = read_u32(&mut r, path)? as usize;
        if name_len > 4096 {
            return Err(Error::Persist("slice name too long".into()));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Persist("slice name is not UTF-8".into()))?;
        let ndim = read_u32(&mut r, path)?;
        if ndim != 2 {
            return Err(Error::Persist(format!("unsupported ndim {ndim}")));
        }
        let rows = read_u64(&mut r, path)? as usize;
        let cols = read_u64(&mut r, path)? as usize;
        let offset = read_u64(&mut r, path)? as usize;
        directory.push((name, rows, cols, offset));
    }
    let count = read_u64(&mut r, path)? as usize;
    let mut values = vec![0.0f64; count];
    let mut buf = [0u8; 8];
    for v in &mut values {
        r.read_exact(&mut buf).map_err(io_err)?;
        *v = f64::from_le_bytes(buf);
    }

    // entries must tile the value section in order
    let mut store = ParamStore::new();
    let mut expect_offset = 0usize;
    for (name, rows, cols, offset) in &directory {
        if *offset != expect_offset {
            return Err(Error::Persist(format!(
                "slice '{name}' offset {offset} does not tile the value section"
            )));
        }
        expect_offset += rows * cols;
        if expect_offset > count {
            return Err(Error::Persist(format!("slice '{name}' overruns values")));
        }
        let m = Matrix::from_vec(
            *rows,
            *cols,
            values[*offset..*offset + rows * cols].to_vec(),
        );
        store.add_matrix(name, &m)?;
    }
    if expect_offset != count {
        return Err(Error::Persist(
            "trailing values not covered by any slice".into(),
        ));
    }
    Ok((store, schema_hash))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(u64::from_le_bytes(buf))
}

fn check_hash(found: u64, schema: &DatasetSchema, what: &str) -> Result<()> {
    if found != schema.hash() {
        return Err(Error::SchemaMismatch(format!(
            "{what} was saved for a different schema (hash {found:#x} vs {:#x})",
            schema.hash()
        )));
    }
    Ok(())
}

/// Persist an encoder/decoder: parameter slices plus meta slices recording
/// the architecture and the training-set row count.
pub fn save_model(model: &EncoderDecoder, n_train: usize, path: &Path) -> Result<()> {
    let mut store = model.store().clone();
    let mut arch = vec![model.latent_dim() as f64, n_train as f64];
    arch.extend(model.hidden().iter().map(|&h| h as f64));
    store.add_matrix("meta.arch", &Matrix::row_vector(&arch))?;
    save_store(&store, model.schema().hash(), path)
}

/// Load an encoder/decoder against the given schema. Returns the model and
/// the recorded training-set row count.
pub fn load_model(path: &Path, schema: Arc<DatasetSchema>) -> Result<(EncoderDecoder, usize)> {
    let (full, hash) = load_store(path)?;
    check_hash(hash, &schema, "model")?;
    let arch = full.matrix("meta.arch")?;
    if arch.len() < 2 {
        return Err(Error::Persist("meta.arch slice too short".into()));
    }
    let latent_dim = arch.data()[0] as usize;
    let n_train = arch.data()[1] as usize;
    let hidden: Vec<usize> = arch.data()[2..].iter().map(|&h| h as usize).collect();
    // rebuild the store without the meta slice
    let mut store = ParamStore::new();
    for name in full.names().to_vec() {
        if name == "meta.arch" {
            continue;
        }
        store.add_matrix(&name, &full.matrix(&name)?)?;
    }
    let model = EncoderDecoder::from_parts(schema, latent_dim, hidden, store)?;
    Ok((model, n_train))
}

pub fn save_bank(bank: &ClassifierBank, path: &Path) -> Result<()> {
    let mut store = bank.store().clone();
    store.add_matrix(
        "meta.frozen",
        &Matrix::scalar(if bank.is_frozen() { 1.0 } else { 0.0 }),
    )?;
    save_store(&store, bank.schema().hash(), path)
}

pub fn load_bank(path: &Path, schema: Arc<DatasetSchema>) -> Result<ClassifierBank> {
    let (full, hash) = load_store(path)?;
    check_hash(hash, &schema, "classifier bank")?;
    let frozen = full.matrix("meta.frozen")?.item() != 0.0;
    let mut store = ParamStore::new();
    for name in full.names().to_vec() {
        if name == "meta.frozen" {
            continue;
        }
        store.add_matrix(&name, &full.matrix(&name)?)?;
    }
    ClassifierBank::from_parts(schema, store, frozen)
}

pub fn save_prior(prior: &PriorModel, schema: &DatasetSchema, path: &Path) -> Result<()> {
    let mut store = ParamStore::new();
    match prior {
        PriorModel::Gmm(g) => {
            store.add_matrix("gmm.weights", &Matrix::row_vector(&g.weights))?;
            store.add_matrix("gmm.means", &g.means)?;
            store.add_matrix("gmm.vars", &g.vars)?;
        }
        PriorModel::Kde(k) => {
            store.add_matrix("kde.points", &k.points)?;
            store.add_matrix("kde.bandwidth", &Matrix::row_vector(&k.bandwidth))?;
        }
    }
    save_store(&store, schema.hash(), path)
}

pub fn load_prior(path: &Path, schema: &DatasetSchema) -> Result<PriorModel> {
    let (store, hash) = load_store(path)?;
    check_hash(hash, schema, "prior")?;
    if store.has("gmm.weights") {
        let weights = store.matrix("gmm.weights")?.data().to_vec();
        let means = store.matrix("gmm.means")?;
        let vars = store.matrix("gmm.vars")?;
        if weights.len() != means.rows() || means.dim() != vars.dim() {
            return Err(Error::Persist("inconsistent mixture slices".into()));
        }
        Ok(PriorModel::Gmm(GmmModel {
            weights,
            means,
            vars,
            ll_trace: vec![],
            collapsed: vec![],
        }))
    } else if store.has("kde.points") {
        let points = store.matrix("kde.points")?;
        let bandwidth = store.matrix("kde.bandwidth")?.data().to_vec();
        if bandwidth.len() != points.cols() {
            return Err(Error::Persist("inconsistent density slices".into()));
        }
        Ok(PriorModel::Kde(KdeModel { points, bandwidth }))
    } else {
        Err(Error::Persist(
            "file holds neither mixture nor density slices".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::rng::SeedStream;

    fn temp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("cwsynth-persist-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn small_schema() -> Arc<DatasetSchema> {
        Arc::new(
            DatasetSchema::new(vec![
                Column {
                    name: "a".into(),
                    levels: vec!["x".into(), "y".into()],
                },
                Column {
                    name: "b".into(),
                    levels: vec!["u".into(), "v".into(), "w".into()],
                },
            ])
            .unwrap(),
        )
    }

    #[test]
    fn store_roundtrip_bit_exact() {
        let mut rng = SeedStream::new(1);
        let mut store = ParamStore::new();
        store.add_glorot("w1", 3, 5, &mut rng).unwrap();
        store.add_glorot("b1", 1, 5, &mut rng).unwrap();
        let path = temp("roundtrip.weights");
        save_store(&store, 0xdead_beef, &path).unwrap();
        let (back, hash) = load_store(&path).unwrap();
        assert_eq!(hash, 0xdead_beef);
        assert_eq!(back.names(), store.names());
        assert_eq!(back.values(), store.values());
    }

    #[test]
    fn rejects_garbage() {
        let path = temp("garbage.weights");
        std::fs::write(&path, b"not a weight file at all").unwrap();
        assert!(load_store(&path).is_err());
    }

    #[test]
    fn model_roundtrip() {
        let schema = small_schema();
        let model = EncoderDecoder::new(Arc::clone(&schema), 2, &[8, 4], 3).unwrap();
        let path = temp("model.weights");
        save_model(&model, 123, &path).unwrap();
        let (back, n_train) = load_model(&path, Arc::clone(&schema)).unwrap();
        assert_eq!(n_train, 123);
        assert_eq!(back.latent_dim(), 2);
        assert_eq!(back.hidden(), &[8, 4]);
        assert_eq!(back.store().values(), model.store().values());
    }

    #[test]
    fn model_schema_hash_mismatch() {
        let schema = small_schema();
        let model = EncoderDecoder::new(Arc::clone(&schema), 2, &[4], 3).unwrap();
        let path = temp("model2.weights");
        save_model(&model, 10, &path).unwrap();
        let other = Arc::new(
            DatasetSchema::new(vec![Column {
                name: "different".into(),
                levels: vec!["0".into(), "1".into()],
            }])
            .unwrap(),
        );
        let err = load_model(&path, other).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)), "{err}");
    }

    #[test]
    fn bank_roundtrip_preserves_frozen_flag() {
        let schema = small_schema();
        let ds =
            crate::data::CategoricalDataset::new(Arc::clone(&schema), vec![0, 1, 1, 2, 0, 0, 1, 1])
                .unwrap();
        let mut bank = ClassifierBank::new(Arc::clone(&schema)).unwrap();
        bank.pretrain(&ds, 20, 0.1, 0).unwrap();
        let path = temp("bank.weights");
        save_bank(&bank, &path).unwrap();
        let back = load_bank(&path, Arc::clone(&schema)).unwrap();
        assert!(back.is_frozen());
        assert_eq!(back.store().values(), bank.store().values());
    }

    #[test]
    fn prior_roundtrips_both_kinds() {
        let schema = small_schema();
        let z = Matrix::from_vec(6, 2, (0..12).map(|i| i as f64 * 0.37).collect());
        let gmm = crate::prior::fit_gmm(&z, 2, 0, 30, 1e-8).unwrap();
        let path = temp("prior-gmm.weights");
        save_prior(&gmm, &schema, &path).unwrap();
        let back = load_prior(&path, &schema).unwrap();
        let lp_orig = crate::prior::prior_logpdf(&gmm, &[0.5, 0.5]).unwrap();
        let lp_back = crate::prior::prior_logpdf(&back, &[0.5, 0.5]).unwrap();
        assert_eq!(lp_orig, lp_back);

        let kde = crate::prior::fit_kde(&z, crate::prior::KdeBandwidth::Auto).unwrap();
        let path = temp("prior-kde.weights");
        save_prior(&kde, &schema, &path).unwrap();
        let back = load_prior(&path, &schema).unwrap();
        let lp_orig = crate::prior::prior_logpdf(&kde, &[0.5, 0.5]).unwrap();
        let lp_back = crate::prior::prior_logpdf(&back, &[0.5, 0.5]).unwrap();
        assert_eq!(lp_orig, lp_back);
    }
}
