//! Binary model file: `MAGIC`, a little-endian `u32` version, the body, and
//! a CRC-32 of the body. See `docs/model-format.md` for the body layout.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{
    ConfigSnapshot, ErrorSet, ErrorSource, ErrorTrace, ImputationModel, ImputeError, InitScheme, Result,
    VariableErrors,
};
use crate::forest::codec::{read_forest, write_forest};
use crate::tabular::ColumnKind;

pub const MAGIC: &[u8; 8] = b"MFPMODEL";
pub const FORMAT_VERSION: u32 = 1;

const CAP: usize = 1 << 28;

fn corrupt(e: io::Error) -> ImputeError {
    ImputeError::Corrupt(e.to_string())
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

struct Encoder(Vec<u8>);

impl Encoder {
    fn len(&mut self, n: usize) {
        self.0.write_u64::<LE>(n as u64).unwrap();
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.write_u32::<LE>(v).unwrap();
    }

    fn f64(&mut self, v: f64) {
        self.0.write_f64::<LE>(v).unwrap();
    }

    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn opt_len(&mut self, v: Option<usize>) {
        match v {
            Some(v) => {
                self.u8(1);
                self.len(v);
            }
            None => self.u8(0),
        }
    }

    fn opt_f64(&mut self, v: Option<f64>) {
        match v {
            Some(v) => {
                self.u8(1);
                self.f64(v);
            }
            None => self.u8(0),
        }
    }

    fn errors(&mut self, e: &ErrorSet) {
        self.f64(e.nmse);
        for v in [e.mse, e.mer, e.f1, e.macro_f1] {
            self.opt_f64(v);
        }
    }
}

struct Decoder<'a>(Cursor<&'a [u8]>);

impl Decoder<'_> {
    fn len(&mut self, what: &str) -> io::Result<usize> {
        let n = self.0.read_u64::<LE>()?;
        if n > CAP as u64 {
            return Err(invalid(format!("{what} count {n} is implausible")));
        }
        Ok(n as usize)
    }

    fn u8(&mut self) -> io::Result<u8> {
        self.0.read_u8()
    }

    fn flag(&mut self) -> io::Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(invalid(format!("bad flag byte {b}"))),
        }
    }

    fn u32(&mut self) -> io::Result<u32> {
        self.0.read_u32::<LE>()
    }

    fn f64(&mut self) -> io::Result<f64> {
        self.0.read_f64::<LE>()
    }

    fn str(&mut self) -> io::Result<String> {
        let n = self.len("string byte")?;
        let mut buf = vec![0; n];
        self.0.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| invalid("string is not UTF-8"))
    }

    fn opt_len(&mut self) -> io::Result<Option<usize>> {
        Ok(if self.flag()? { Some(self.len("option")?) } else { None })
    }

    fn opt_f64(&mut self) -> io::Result<Option<f64>> {
        Ok(if self.flag()? { Some(self.f64()?) } else { None })
    }

    fn errors(&mut self) -> io::Result<ErrorSet> {
        Ok(ErrorSet {
            nmse: self.f64()?,
            mse: self.opt_f64()?,
            mer: self.opt_f64()?,
            f1: self.opt_f64()?,
            macro_f1: self.opt_f64()?,
        })
    }

    fn column(&mut self, n_cols: usize) -> io::Result<usize> {
        let c = self.len("column index")?;
        if c >= n_cols {
            return Err(invalid(format!("column index {c} out of range")));
        }
        Ok(c)
    }
}

fn encode_body(m: &ImputationModel) -> io::Result<Vec<u8>> {
    let mut e = Encoder(Vec::new());
    e.len(m.schema.len());
    for ((name, kind), &majority) in m.schema.iter().zip(&m.majority_levels) {
        e.str(name);
        match kind {
            ColumnKind::Continuous => e.u8(0),
            ColumnKind::Categorical { levels } => {
                e.u8(1);
                e.len(levels.len());
                levels.iter().for_each(|l| e.str(l));
                e.u32(majority);
            }
        }
    }

    let c = &m.config;
    e.len(c.num_trees);
    e.opt_len(c.mtry);
    e.opt_len(c.min_node_size);
    e.len(c.max_depth);
    e.u8(match c.convergence {
        ErrorSource::Oob => 0,
        ErrorSource::Apparent => 1,
    });
    e.len(c.max_iterations);
    e.f64(c.p_obs_threshold);
    e.f64(c.p_miss_threshold);
    e.u8(match c.init_scheme {
        InitScheme::MeanMode => 0,
        InitScheme::MedianMode => 1,
    });
    e.0.write_u64::<LE>(c.seed)?;

    m.init_values.iter().for_each(|&v| e.f64(v));
    e.len(m.sequence.len());
    for (&col, preds) in m.sequence.iter().zip(&m.predictors) {
        e.len(col);
        e.len(preds.len());
        preds.iter().for_each(|&p| e.len(p));
    }
    e.len(m.n_iter);
    e.len(m.forests.len());
    for sweep in &m.forests {
        for f in sweep {
            match f {
                Some(f) => {
                    e.u8(1);
                    let mut buf = Vec::new();
                    write_forest(&mut buf, f)?;
                    e.len(buf.len());
                    e.0.extend_from_slice(&buf);
                }
                None => e.u8(0),
            }
        }
    }

    let t = &m.trace;
    t.weights.iter().for_each(|&w| e.f64(w));
    t.global_apparent.iter().for_each(|&v| e.f64(v));
    t.global_oob.iter().for_each(|&v| e.f64(v));
    e.len(t.records.len());
    for r in &t.records {
        e.len(r.column);
        e.len(r.iteration);
        e.u8(u8::from(r.init_only));
        e.errors(&r.apparent);
        e.errors(&r.oob);
    }
    Ok(e.0)
}

fn decode_body(body: &[u8]) -> io::Result<ImputationModel> {
    let mut d = Decoder(Cursor::new(body));
    let n_cols = d.len("column")?;
    let mut schema = Vec::with_capacity(n_cols.min(1024));
    let mut majority_levels = Vec::with_capacity(n_cols.min(1024));
    for _ in 0..n_cols {
        let name = d.str()?;
        match d.u8()? {
            0 => {
                schema.push((name, ColumnKind::Continuous));
                majority_levels.push(0);
            }
            1 => {
                let n = d.len("level")?;
                let levels = (0..n).map(|_| d.str()).collect::<io::Result<Vec<_>>>()?;
                let kind = ColumnKind::categorical(levels.clone()).map_err(|e| invalid(e.to_string()))?;
                if kind.levels() != Some(&levels[..]) {
                    return Err(invalid(format!("levels of '{name}' are not in canonical order")));
                }
                let majority = d.u32()?;
                if majority as usize >= n {
                    return Err(invalid(format!("majority level of '{name}' out of range")));
                }
                schema.push((name, kind));
                majority_levels.push(majority);
            }
            b => return Err(invalid(format!("unknown column kind {b}"))),
        }
    }

    let config = ConfigSnapshot {
        num_trees: d.len("tree")?,
        mtry: d.opt_len()?,
        min_node_size: d.opt_len()?,
        max_depth: d.len("depth")?,
        convergence: match d.u8()? {
            0 => ErrorSource::Oob,
            1 => ErrorSource::Apparent,
            b => return Err(invalid(format!("unknown error source {b}"))),
        },
        max_iterations: d.len("iteration")?,
        p_obs_threshold: d.f64()?,
        p_miss_threshold: d.f64()?,
        init_scheme: match d.u8()? {
            0 => InitScheme::MeanMode,
            1 => InitScheme::MedianMode,
            b => return Err(invalid(format!("unknown init scheme {b}"))),
        },
        seed: d.0.read_u64::<LE>()?,
    };

    let init_values = (0..n_cols).map(|_| d.f64()).collect::<io::Result<Vec<_>>>()?;
    let n_seq = d.len("sequence")?;
    let mut sequence = Vec::new();
    let mut predictors = Vec::new();
    for _ in 0..n_seq {
        sequence.push(d.column(n_cols)?);
        let n = d.len("predictor")?;
        predictors.push((0..n).map(|_| d.column(n_cols)).collect::<io::Result<Vec<_>>>()?);
    }
    let n_iter = d.len("iteration")?;
    let n_trained = d.len("iteration")?;
    if n_iter > n_trained {
        return Err(invalid("more replayed iterations than trained ones"));
    }
    let mut forests = Vec::new();
    for _ in 0..n_trained {
        let mut sweep = Vec::with_capacity(n_seq);
        for expected in &predictors {
            if d.flag()? {
                let n = d.len("forest byte")?;
                let start = d.0.position() as usize;
                let end = start.checked_add(n).filter(|&e| e <= body.len()).ok_or_else(|| invalid("forest block truncated"))?;
                let mut block = &body[start..end];
                let f = read_forest(&mut block)?;
                if !block.is_empty() {
                    return Err(invalid("trailing bytes in forest block"));
                }
                if f.n_features() != expected.len() {
                    return Err(invalid("forest width does not match its predictor list"));
                }
                d.0.set_position(end as u64);
                sweep.push(Some(f));
            } else {
                sweep.push(None);
            }
        }
        forests.push(sweep);
    }

    let weights = (0..n_seq).map(|_| d.f64()).collect::<io::Result<Vec<_>>>()?;
    let global_apparent = (0..n_trained).map(|_| d.f64()).collect::<io::Result<Vec<_>>>()?;
    let global_oob = (0..n_trained).map(|_| d.f64()).collect::<io::Result<Vec<_>>>()?;
    let n_records = d.len("record")?;
    let mut records = Vec::with_capacity(n_records.min(1 << 16));
    for _ in 0..n_records {
        let column = d.column(n_cols)?;
        let iteration = d.len("iteration")?;
        if iteration == 0 || iteration > n_trained {
            return Err(invalid("trace record iteration out of range"));
        }
        let (name, kind) = &schema[column];
        records.push(VariableErrors {
            variable: name.clone(),
            column,
            iteration,
            categorical: kind.is_categorical(),
            init_only: d.flag()?,
            apparent: d.errors()?,
            oob: d.errors()?,
        });
    }
    if (d.0.position() as usize) != body.len() {
        return Err(invalid("trailing bytes after model body"));
    }
    Ok(ImputationModel {
        schema,
        majority_levels,
        init_values,
        sequence,
        predictors,
        n_iter,
        forests,
        trace: ErrorTrace { records, weights, global_apparent, global_oob },
        config,
    })
}

pub fn write_model<W: Write>(mut w: W, m: &ImputationModel) -> Result<()> {
    let body = encode_body(m)?;
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(FORMAT_VERSION)?;
    w.write_all(&body)?;
    w.write_u32::<LE>(crc32fast::hash(&body))?;
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<ImputationModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ImputeError::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 8 {
        return Err(ImputeError::Corrupt("file truncated".into()));
    }
    let version = u32::from_le_bytes(rest[..4].try_into().unwrap());
    if version > FORMAT_VERSION || version == 0 {
        return Err(ImputeError::UnsupportedVersion { found: version, supported: FORMAT_VERSION });
    }
    let body = &rest[4..rest.len() - 4];
    let stored = u32::from_le_bytes(rest[rest.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(ImputeError::Checksum);
    }
    decode_body(body).map_err(corrupt)
}

pub fn save_model(m: &ImputationModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), m)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ImputationModel> {
    read_model(BufReader::new(File::open(path)?))
}
