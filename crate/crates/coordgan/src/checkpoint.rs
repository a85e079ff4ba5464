//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CCGN"  u32 version  u32 text-length  text (UTF-8 key = value lines)
//! repeated: u32 name-length  name  u8 rank  u32 dims[rank]  f32 data[product(dims)]
//! ```
//!
//! The text holds the run configuration plus `state.*` keys (step counter,
//! optimizer step counts, random stream position). Tensor names carry a
//! prefix saying what they are: `param:`, `sn:`, `buffer:`, or
//! `adam.<g|d|q>.<m|v>:` for optimizer moments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use coordgan_core::nn::{ArchConfig, ModelBundle};
use coordgan_core::train::{Adam, Freeze, StepMetrics, Trainer};
use coordgan_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_pairs, RunConfig};
use crate::error::{AppError, Result};

pub const MAGIC: &[u8; 4] = b"CCGN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub text: String,
    /// In file order.
    pub tensors: Vec<(String, Tensor<f32>)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| AppError::Format(format!("checkpoint truncated in {what}")))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("four bytes"),
        ))
    }

    fn done(&self) -> bool {
        self.at == self.bytes.len()
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits the format").to_le_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, self.text.len());
        out.extend_from_slice(self.text.as_bytes());
        for (name, t) in &self.tensors {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            out.push(u8::try_from(t.rank()).expect("rank below 256"));
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(AppError::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(AppError::Format(format!(
                "checkpoint version {version}, expected {VERSION}"
            )));
        }
        let n = r.u32("text length")? as usize;
        let text = std::str::from_utf8(r.take(n, "config text")?)
            .map_err(|_| AppError::Format("config text is not UTF-8".into()))?
            .to_string();
        let mut tensors = Vec::new();
        while !r.done() {
            let n = r.u32("tensor name length")? as usize;
            let name = String::from_utf8(r.take(n, "tensor name")?.to_vec())
                .map_err(|_| AppError::Format("tensor name is not UTF-8".into()))?;
            let rank = r.take(1, &name)?[0] as usize;
            let shape = (0..rank)
                .map(|_| r.u32(&name).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let bytes = len
                .and_then(|l| l.checked_mul(4))
                .ok_or_else(|| AppError::Format(format!("`{name}` is too large")))?;
            let data = r
                .take(bytes, &name)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        Ok(Checkpoint { text, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| AppError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Everything needed to continue `trainer` exactly where it stands, plus the losses of its latest step.
    pub fn capture(cfg: &RunConfig, trainer: &Trainer, last: Option<&StepMetrics>) -> Self {
        // where outputs go is not part of the model, so two runs differing only in `--out` match bitwise
        let mut text: String = cfg
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("out.dir "))
            .map(|l| format!("{l}\n"))
            .collect();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(text, "{k} = {v}");
        };
        let rng = &trainer.rng;
        kv("state.step", &trainer.step);
        kv("state.extend", &trainer.extend);
        if trainer.extend > 0 {
            let (h, w) = (
                trainer.layout.grid_h + 2 * trainer.extend,
                trainer.layout.grid_w + 2 * trainer.extend,
            );
            kv("state.extended_grid", &format!("{h}x{w}"));
        }
        kv(
            "state.freeze",
            &if trainer.freeze == Freeze::None {
                "none"
            } else {
                "all-but-first-two"
            },
        );
        kv("state.rng.seed", &hex(&rng.get_seed()));
        kv("state.rng.stream", &rng.get_stream());
        kv("state.rng.word_pos", &rng.get_word_pos());
        for (tag, opt) in [
            ("g", &trainer.opt_g),
            ("d", &trainer.opt_d),
            ("q", &trainer.opt_q),
        ] {
            kv(&format!("state.adam.{tag}.t"), &opt.t);
        }
        if let Some(m) = last {
            for (k, v) in [
                ("l_w", m.l_w),
                ("l_gp", m.l_gp),
                ("l_s", m.l_s),
                ("l_q", m.l_q),
            ] {
                kv(&format!("state.last.{k}"), &v);
            }
        }

        let b = &trainer.bundle;
        let mut tensors = Vec::new();
        let mut add = |prefix: &str, map: &BTreeMap<String, Tensor<f32>>| {
            tensors.extend(
                map.iter()
                    .map(|(n, t)| (format!("{prefix}:{n}"), t.clone())),
            );
        };
        add("param", &b.params);
        add("sn", &b.sn_state);
        add("buffer", &b.buffers);
        for (tag, opt) in [
            ("g", &trainer.opt_g),
            ("d", &trainer.opt_d),
            ("q", &trainer.opt_q),
        ] {
            add(&format!("adam.{tag}.m"), &opt.m);
            add(&format!("adam.{tag}.v"), &opt.v);
        }
        Checkpoint { text, tensors }
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::parse(&self.text)
    }

    fn state(&self) -> Result<BTreeMap<String, String>> {
        Ok(parse_pairs(&self.text)?
            .into_iter()
            .filter(|(k, _)| k.starts_with("state."))
            .map(|(k, (_, v))| (k, v))
            .collect())
    }

    /// Losses of the last step before capture, if any step ran.
    pub fn last_metrics(&self) -> Result<Option<StepMetrics>> {
        let state = self.state()?;
        let Some(step) = state.get("state.step") else {
            return Ok(None);
        };
        let mut m = StepMetrics {
            step: parse_num("state.step", step)?,
            ..Default::default()
        };
        for (k, slot) in [
            ("l_w", &mut m.l_w),
            ("l_gp", &mut m.l_gp),
            ("l_s", &mut m.l_s),
            ("l_q", &mut m.l_q),
        ] {
            match state.get(&format!("state.last.{k}")) {
                Some(v) => *slot = parse_num(k, v)?,
                None => return Ok(None),
            }
        }
        Ok(Some(m))
    }

    fn group(&self, prefix: &str) -> BTreeMap<String, Tensor<f32>> {
        self.tensors
            .iter()
            .filter_map(|(n, t)| {
                n.strip_prefix(prefix)
                    .and_then(|n| n.strip_prefix(':'))
                    .map(|n| (n.to_string(), t.clone()))
            })
            .collect()
    }

    /// The models, checked against `arch`. Errors name the first missing or foreign tensor.
    pub fn bundle(&self, arch: ArchConfig) -> Result<ModelBundle> {
        let known = [
            "param", "sn", "buffer", "adam.g.m", "adam.g.v", "adam.d.m", "adam.d.v", "adam.q.m",
            "adam.q.v",
        ];
        if let Some((n, _)) = self
            .tensors
            .iter()
            .find(|(n, _)| !n.split_once(':').is_some_and(|(p, _)| known.contains(&p)))
        {
            return Err(AppError::Format(format!(
                "tensor `{n}` has an unknown kind"
            )));
        }
        let bundle = ModelBundle {
            arch,
            params: self.group("param"),
            sn_state: self.group("sn"),
            buffers: self.group("buffer"),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// The configuration and a trainer in exactly the captured state.
    pub fn restore(&self) -> Result<(RunConfig, Trainer)> {
        let cfg = self.config()?;
        let mut tr = Trainer::new(self.bundle(cfg.arch)?, cfg.layout, cfg.train)?;
        let state = self.state()?;
        let get = |k: &str| {
            state
                .get(k)
                .ok_or_else(|| AppError::Format(format!("checkpoint lacks {k}")))
        };
        tr.step = parse_num("state.step", get("state.step")?)?;
        tr.extend = parse_num("state.extend", get("state.extend")?)?;
        tr.freeze = match get("state.freeze")?.as_str() {
            "none" => Freeze::None,
            "all-but-first-two" => Freeze::AllButFirstTwo,
            other => return Err(AppError::Format(format!("unknown freeze `{other}`"))),
        };
        let seed = unhex(get("state.rng.seed")?)?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(parse_num("state.rng.stream", get("state.rng.stream")?)?);
        rng.set_word_pos(parse_num("state.rng.word_pos", get("state.rng.word_pos")?)?);
        tr.rng = rng;
        for (tag, opt) in [
            ("g", &mut tr.opt_g),
            ("d", &mut tr.opt_d),
            ("q", &mut tr.opt_q),
        ] {
            let key = format!("state.adam.{tag}.t");
            opt.t = parse_num(&key, get(&key)?)?;
            opt.m = self.group(&format!("adam.{tag}.m"));
            opt.v = self.group(&format!("adam.{tag}.v"));
            check_moments(tag, opt, &tr.bundle)?;
        }
        Ok((cfg, tr))
    }
}

fn parse_num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| AppError::Format(format!("bad value for {k}: `{v}`")))
}

fn check_moments(tag: &str, opt: &Adam, bundle: &ModelBundle) -> Result<()> {
    for (name, t) in opt.m.iter().chain(&opt.v) {
        let p = bundle
            .params
            .get(name)
            .ok_or_else(|| AppError::Format(format!("optimizer {tag} tracks unknown `{name}`")))?;
        if p.shape() != t.shape() {
            return Err(AppError::Format(format!(
                "optimizer {tag} moment of `{name}` has the wrong shape"
            )));
        }
    }
    if opt.m.len() != opt.v.len() {
        return Err(AppError::Format(format!(
            "optimizer {tag} moments are incomplete"
        )));
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    let bad = || AppError::Format(format!("bad rng seed `{s}`"));
    if s.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (k, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(s.get(2 * k..2 * k + 2).ok_or_else(bad)?, 16).map_err(|_| bad())?;
    }
    Ok(out)
}
