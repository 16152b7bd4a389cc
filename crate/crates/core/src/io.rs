//! File formats: word vectors, fact and example tables, binary checkpoints,
//! flat run configs, and JSON with round-trippable floats.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;

use crate::autodiff::{ParamSet, Tensor};
use crate::data::{Example, ExampleId, Split};
use crate::error::{Error, Result};
use crate::fact::{EmbeddingTable, Fact, FactId};

const CKPT_MAGIC: &[u8; 8] = b"LLFLCKPT";
const CKPT_VERSION: u32 = 1;

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Word vectors: a `V D` header, then `token v1 … vD` per line.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, 1, "header must be `<count> <dim>`"))?;
    let [count, dim] = nums[..] else {
        return Err(parse_err(path, 1, "header must be `<count> <dim>`"));
    };
    let mut table = EmbeddingTable::new(dim).map_err(|e| parse_err(path, 1, e.to_string()))?;
    let mut seen = 0;
    for (i, line) in lines.enumerate() {
        let lineno = i as u64 + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap();
        let vector: Vec<f64> = parts
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, lineno, format!("bad number: {e}")))?;
        table
            .insert(token, vector)
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        seen += 1;
    }
    if seen != count {
        return Err(parse_err(path, 1, format!("header promises {count} vectors, found {seen}")));
    }
    Ok(table)
}

pub fn write_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut out = String::new();
    let tokens = table.tokens();
    out.push_str(&format!("{} {}\n", tokens.len(), table.dim()));
    for t in tokens {
        out.push_str(t);
        for v in table.get(t).unwrap() {
            out.push(' ');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    write_string(path, &out)
}

/// Tab-separated `id subject predicate object`, `*` marking an undefined slot.
pub fn read_facts(path: &Path) -> Result<Vec<Fact>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_lowercase())
        .collect();
    if header != ["id", "subject", "predicate", "object"] {
        return Err(parse_err(path, 1, "header must be id, subject, predicate, object"));
    }
    let mut facts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id: u32 = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad fact id `{}`", &rec[0])))?;
        let fact = Fact::from_fields(id, &rec[1], &rec[2], &rec[3]).map_err(|e| parse_err(path, line, e.to_string()))?;
        facts.push(fact);
    }
    Ok(facts)
}

pub fn write_facts(path: &Path, facts: &[Fact]) -> Result<()> {
    let mut out = String::from("id\tsubject\tpredicate\tobject\n");
    for f in facts {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            f.id,
            f.subject,
            f.predicate.as_deref().unwrap_or("*"),
            f.object.as_deref().unwrap_or("*")
        ));
    }
    write_string(path, &out)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(path, line, format!("{other:?}")),
    }
}

/// Comma-separated `example_id, fact_id, split, f1 … fF`.
pub fn read_examples(path: &Path) -> Result<Vec<Example>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 4 || &header[0] != "example_id" || &header[1] != "fact_id" || &header[2] != "split" {
        return Err(parse_err(path, 1, "header must be example_id, fact_id, split, f1, …"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id: u64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad example id `{}`", &rec[0])))?;
        let fact: u32 = rec[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad fact id `{}`", &rec[1])))?;
        let split = match rec[2].trim() {
            "train" => Split::Train,
            "test" => Split::Test,
            s => return Err(parse_err(path, line, format!("split must be train or test, got `{s}`"))),
        };
        let features: Vec<f64> = rec
            .iter()
            .skip(3)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, line, format!("bad feature: {e}")))?;
        if features.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, line, "non-finite feature"));
        }
        out.push(Example {
            id: ExampleId(id),
            fact_id: FactId(fact),
            split,
            features,
        });
    }
    Ok(out)
}

pub fn write_examples(path: &Path, examples: &[Example]) -> Result<()> {
    let dim = examples.first().map_or(0, |e| e.features.len());
    let mut out = String::from("example_id,fact_id,split");
    for i in 1..=dim {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for e in examples {
        out.push_str(&format!("{},{},{}", e.id, e.fact_id, e.split.as_str()));
        for v in &e.features {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    write_string(path, &out)
}

/// Binary checkpoint: magic, version, then `(name, rank, dims, data)` records.
pub fn encode_checkpoint(params: &ParamSet) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct ByteReader<'a> {
    rest: &'a [u8],
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.rest.len() < n {
            return None;
        }
        let (head, rest) = self.rest.split_at(n);
        self.rest = rest;
        Some(head)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ParamSet> {
    let bad = |msg: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let truncated = || bad("truncated");
    let mut r = ByteReader { rest: bytes };
    if r.take(8) != Some(&CKPT_MAGIC[..]) {
        return Err(bad("wrong magic"));
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != CKPT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let count = r.u32().ok_or_else(truncated)?;
    let mut set = ParamSet::new();
    for _ in 0..count {
        let len = r.u32().ok_or_else(truncated)? as usize;
        let name = std::str::from_utf8(r.take(len).ok_or_else(truncated)?)
            .map_err(|_| bad("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32().ok_or_else(truncated)? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize).ok_or_else(truncated))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r
            .take(n.checked_mul(8).ok_or_else(|| bad("tensor too large"))?)
            .ok_or_else(truncated)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| bad(&format!("tensor `{name}`: {e}")))?;
        set.insert(name, t).map_err(|e| bad(&e.to_string()))?;
    }
    if !r.rest.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(set)
}

pub fn write_checkpoint(path: &Path, params: &ParamSet) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(&encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ParamSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// Flat `key = value` file; `#` starts a comment.
pub fn read_run_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run_config(&text, path)
}

pub fn parse_run_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, i as u64 + 1, "expected `key = value`"))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(parse_err(path, i as u64 + 1, "empty key"));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(parse_err(path, i as u64 + 1, format!("duplicate key `{k}`")));
        }
    }
    Ok(out)
}

/// Shortest form with 17 significant digits, in the manner of `%.17g`.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-5..17).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Pretty JSON with every float at 17 significant digits.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Pretty::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Indented output that still routes floats through [`format_f64`].
#[derive(Default)]
struct Pretty {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

macro_rules! delegate {
    ($($name:ident $(, $arg:ident : $ty:ty)*;)*) => {
        $(fn $name<W: ?Sized + std::io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> std::io::Result<()> {
            self.inner.$name(w $(, $arg)*)
        })*
    };
}

impl serde_json::ser::Formatter for Pretty {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(format_f64(value).as_bytes())
    }

    delegate! {
        begin_array;
        end_array;
        begin_array_value, first: bool;
        end_array_value;
        begin_object;
        end_object;
        begin_object_key, first: bool;
        begin_object_value;
        end_object_value;
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_string(path, &to_json_string(value)?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:016x}", crate::rng::fnv1a64(&bytes)))
}
