//! Experiment configuration: flat `section.key = value` text (a TOML subset).
//!
//! ```text
//! seed = 7
//! grid.d = 1
//! grid.periods = [8, 8]
//! exponents.p = 2
//! exponents.q = 2
//! sampling.gamma = 0.5
//! kernels.a = 0.25
//! ```
//!
//! Every other key has a default; [`ExperimentConfig::echo`] writes all of them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernel::{KernelSpec, Shape};
use crate::norms::MixedExponents;
use crate::sampling::{KernelMode, PsiShape, SamplingMode};

/// A bank generator: a catalog shape, optionally dilated, written `shape[*scale]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub shape: Shape,
    pub scale: f64,
}

impl GeneratorSpec {
    pub fn kernel(&self, dim: usize) -> KernelSpec {
        KernelSpec::new(self.shape, dim).scaled(self.scale)
    }

    pub fn support_diameter(&self) -> f64 {
        2.0 * self.shape.half_width() * self.scale
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale == 1.0 {
            write!(f, "{}", self.shape)
        } else {
            write!(f, "{}*{}", self.shape, self.scale)
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (shape, scale) = match s.split_once('*') {
            Some((sh, sc)) => (
                sh,
                sc.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidKernel(format!("bad scale in `{s}`")))?,
            ),
            None => (s, 1.0),
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidKernel(format!("scale must be positive in `{s}`")));
        }
        Ok(GeneratorSpec { shape: shape.parse()?, scale })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingConfig {
    Jittered { s: f64, eta: f64, product: bool },
    Random { n: usize },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub periods: [usize; 2],
    pub m: usize,
    pub p: f64,
    pub q: f64,
    pub generators: Vec<GeneratorSpec>,
    pub sampling: SamplingConfig,
    pub gamma: f64,
    pub kernel_mode: KernelMode,
    pub kernel_shape: PsiShape,
    pub a: f64,
    pub m_target: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "seed",
    "grid.d",
    "grid.periods",
    "grid.m",
    "exponents.p",
    "exponents.q",
    "bank.generators",
    "sampling.mode",
    "sampling.gamma",
    "sampling.s",
    "sampling.eta",
    "sampling.product",
    "sampling.n",
    "sampling.file",
    "kernels.mode",
    "kernels.shape",
    "kernels.a",
    "kernels.m_target",
    "kernels.max_offset",
    "iteration.max_iter",
    "iteration.tol",
    "output.dir",
];

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Typed access to the flattened keys, collecting every problem.
struct Reader {
    values: BTreeMap<String, toml::Value>,
    errors: Vec<String>,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<&toml::Value> {
        self.values.get(key)
    }

    fn missing(&mut self, key: &str) {
        self.errors.push(format!("{key}: missing required key"));
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        match self.raw(key)? {
            toml::Value::Float(v) => Some(*v),
            toml::Value::Integer(v) => Some(*v as f64),
            other => {
                let msg = format!("{key}: expected a number, got `{other}`");
                self.errors.push(msg);
                None
            }
        }
    }

    fn uint(&mut self, key: &str) -> Option<u64> {
        match self.raw(key)? {
            toml::Value::Integer(v) if *v >= 0 => Some(*v as u64),
            other => {
                let msg = format!("{key}: expected a non-negative integer, got `{other}`");
                self.errors.push(msg);
                None
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.raw(key)? {
            toml::Value::String(s) => Some(s.clone()),
            other => {
                let msg = format!("{key}: expected a string, got `{other}`");
                self.errors.push(msg);
                None
            }
        }
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        match self.raw(key)? {
            toml::Value::Boolean(b) => Some(*b),
            other => {
                let msg = format!("{key}: expected true or false, got `{other}`");
                self.errors.push(msg);
                None
            }
        }
    }

    fn array(&mut self, key: &str) -> Option<Vec<toml::Value>> {
        match self.raw(key)? {
            toml::Value::Array(a) => Some(a.clone()),
            other => {
                let msg = format!("{key}: expected an array, got `{other}`");
                self.errors.push(msg);
                None
            }
        }
    }

    fn required_float(&mut self, key: &str) -> Option<f64> {
        if self.raw(key).is_none() {
            self.missing(key);
            return None;
        }
        self.float(key)
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.errors.push(msg());
        }
    }
}

/// Reads and validates a config file, reporting every violation at once.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| match e {
        Error::Config(errs) => Error::Config(errs.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
        other => other,
    })
}

/// Parses config text; relative `sampling.file` paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![format!("syntax: {}", e.message())]))?;
    let mut values = BTreeMap::new();
    flatten("", &table, &mut values);
    let mut r = Reader { values, errors: Vec::new() };
    for key in r.values.keys().cloned().collect::<Vec<_>>() {
        if !KEYS.contains(&key.as_str()) {
            r.errors.push(format!("{key}: unknown key"));
        }
    }

    // grid
    let d = match r.uint("grid.d") {
        Some(v) => Some(v as usize),
        None => {
            if r.raw("grid.d").is_none() {
                r.missing("grid.d");
            }
            None
        }
    };
    let periods = match r.array("grid.periods") {
        Some(a) => {
            let ps: Vec<Option<usize>> = a
                .iter()
                .map(|v| v.as_integer().filter(|&i| i > 0).map(|i| i as usize))
                .collect();
            if ps.len() != 2 || ps.iter().any(|p| p.is_none()) {
                r.errors.push("grid.periods: expected [L1, L2] with positive integers".into());
                None
            } else {
                Some([ps[0].unwrap(), ps[1].unwrap()])
            }
        }
        None => {
            if r.raw("grid.periods").is_none() {
                r.missing("grid.periods");
            }
            None
        }
    };
    let m = r.uint("grid.m").map(|v| v as usize).unwrap_or(16);
    if let Some(d) = d {
        r.check(d >= 1, || format!("grid.d: must satisfy d >= 1 (got {d})"));
    }
    if let Some(ps) = periods {
        for (i, &p) in ps.iter().enumerate() {
            r.check(p >= 4, || format!("grid.periods: period L{} must be >= 4 (got {p})", i + 1));
        }
    }
    r.check(m >= 4, || format!("grid.m: must satisfy m >= 4 (got {m})"));
    let min_period = periods.map(|p| p[0].min(p[1]) as f64);

    // exponents
    let p = r.required_float("exponents.p");
    let q = r.required_float("exponents.q");
    for (key, v) in [("exponents.p", p), ("exponents.q", q)] {
        if let Some(v) = v {
            let name = &key[10..];
            r.check(v >= 1.0 && v.is_finite(), || {
                format!("{key}: must satisfy {name} >= 1 and finite (got {v})")
            });
        }
    }

    // bank
    let generators: Vec<GeneratorSpec> = match r.array("bank.generators") {
        Some(a) if a.is_empty() => {
            r.errors.push("bank.generators: needs at least one generator".into());
            Vec::new()
        }
        Some(a) => a
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let parsed = v
                    .as_str()
                    .ok_or_else(|| Error::InvalidKernel(format!("expected a string, got `{v}`")))
                    .and_then(|s| s.parse::<GeneratorSpec>());
                match parsed {
                    Ok(g) => Some(g),
                    Err(e) => {
                        r.errors.push(format!("bank.generators[{i}]: {e}"));
                        None
                    }
                }
            })
            .collect(),
        None => vec![GeneratorSpec { shape: Shape::BSpline(4), scale: 1.0 }],
    };
    if let Some(mp) = min_period {
        for (i, g) in generators.iter().enumerate() {
            r.check(g.support_diameter() < mp, || {
                format!(
                    "bank.generators[{i}]: support-vs-period rule: support diameter {} must be < min period {mp}",
                    g.support_diameter()
                )
            });
        }
    }

    // sampling
    let gamma = r.required_float("sampling.gamma");
    if let Some(g) = gamma {
        r.check(g > 0.0 && g.is_finite(), || format!("sampling.gamma: must be > 0 (got {g})"));
    }
    let mode = r.string("sampling.mode").unwrap_or_else(|| "jittered".into());
    let sampling = match mode.as_str() {
        "jittered" => {
            let s = r.float("sampling.s").or(gamma);
            let eta = r.float("sampling.eta").or(s.map(|s| 0.4 * s));
            let product = r.boolean("sampling.product").unwrap_or(false);
            if let (Some(s), Some(mp)) = (s, min_period) {
                r.check(s > 0.0 && s < mp, || format!("sampling.s: must satisfy 0 < s < min period {mp} (got {s})"));
            }
            if let (Some(s), Some(eta)) = (s, eta) {
                r.check(eta >= 0.0 && eta < s / 2.0, || format!("sampling.eta: must satisfy 0 <= eta < s/2 (got {eta})"));
            }
            match (s, eta) {
                (Some(s), Some(eta)) => Some(SamplingConfig::Jittered { s, eta, product }),
                _ => None,
            }
        }
        "random" => match r.uint("sampling.n") {
            Some(n) if n > 0 => Some(SamplingConfig::Random { n: n as usize }),
            Some(_) => {
                r.errors.push("sampling.n: must be positive".into());
                None
            }
            None => {
                if r.raw("sampling.n").is_none() {
                    r.missing("sampling.n");
                }
                None
            }
        },
        "file" => match r.string("sampling.file") {
            Some(f) => {
                let joined = base.join(f);
                Some(SamplingConfig::File { path: std::path::absolute(&joined).unwrap_or(joined) })
            }
            None => {
                if r.raw("sampling.file").is_none() {
                    r.missing("sampling.file");
                }
                None
            }
        },
        other => {
            r.errors.push(format!("sampling.mode: expected jittered, random or file (got `{other}`)"));
            None
        }
    };

    // kernels
    let a = r.required_float("kernels.a");
    if let Some(a) = a {
        r.check(a > 0.0, || format!("kernels.a: must be > 0 (got {a})"));
        if let Some(mp) = min_period {
            r.check(a <= mp / 8.0, || {
                format!("kernels.a: support-vs-period rule: a must be <= min period / 8 = {} (got {a})", mp / 8.0)
            });
        }
    }
    let kernel_shape = match r.string("kernels.shape") {
        Some(s) => match s.parse::<PsiShape>() {
            Ok(v) => Some(v),
            Err(_) => {
                r.errors.push(format!("kernels.shape: expected box, tent or signed (got `{s}`)"));
                None
            }
        },
        None => Some(PsiShape::Box),
    };
    let m_target = r.float("kernels.m_target").unwrap_or(1.0);
    r.check(m_target >= 1.0 && m_target.is_finite(), || {
        format!("kernels.m_target: must satisfy M >= 1 (got {m_target})")
    });
    let kernel_mode = match r.string("kernels.mode").as_deref().unwrap_or("single") {
        "single" => {
            r.check(r.raw("kernels.max_offset").is_none(), || {
                "kernels.max_offset: only valid with kernels.mode = \"per_sample\"".into()
            });
            Some(KernelMode::Single)
        }
        "per_sample" => {
            let off = r.float("kernels.max_offset").or(a.map(|a| a / 4.0));
            if let (Some(off), Some(a)) = (off, a) {
                r.check(off >= 0.0 && off <= a / 4.0, || {
                    format!("kernels.max_offset: must satisfy 0 <= offset <= a/4 (got {off})")
                });
            }
            off.map(|max_offset| KernelMode::PerSample { max_offset })
        }
        other => {
            r.errors.push(format!("kernels.mode: expected single or per_sample (got `{other}`)"));
            None
        }
    };

    // iteration, seed, output
    let max_iter = r.uint("iteration.max_iter").unwrap_or(500) as usize;
    r.check(max_iter >= 1, || "iteration.max_iter: must be >= 1".into());
    let tol = r.float("iteration.tol").unwrap_or(1e-10);
    r.check(tol > 0.0, || format!("iteration.tol: must be > 0 (got {tol})"));
    let seed = r.uint("seed").unwrap_or(0);
    let output_dir = PathBuf::from(r.string("output.dir").unwrap_or_else(|| "out".into()));

    if !r.errors.is_empty() {
        return Err(Error::Config(r.errors));
    }
    let cfg = ExperimentConfig {
        d: d.unwrap(),
        periods: periods.unwrap(),
        m,
        p: p.unwrap(),
        q: q.unwrap(),
        generators,
        sampling: sampling.unwrap(),
        gamma: gamma.unwrap(),
        kernel_mode: kernel_mode.unwrap(),
        kernel_shape: kernel_shape.unwrap(),
        a: a.unwrap(),
        m_target,
        max_iter,
        tol,
        seed,
        output_dir,
    };
    Ok(cfg)
}

fn float_literal(v: f64) -> String {
    // Debug output is the shortest text that reads back to the same bits
    format!("{v:?}")
}

fn string_literal(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.d, self.periods[0], self.periods[1], self.m)
    }

    pub fn exponents(&self) -> Result<MixedExponents> {
        MixedExponents::new(self.p, self.q)
    }

    pub fn sampling_mode(&self) -> Option<SamplingMode> {
        match &self.sampling {
            SamplingConfig::Jittered { s, eta, product } => {
                Some(SamplingMode::JitteredGrid { spacing: *s, jitter: *eta, product: *product })
            }
            SamplingConfig::Random { n } => Some(SamplingMode::UniformRandom { count: *n }),
            SamplingConfig::File { .. } => None,
        }
    }

    /// Every key with its resolved value, one `key = value` line each, in a fixed order.
    pub fn echo(&self) -> String {
        let mut lines = vec![
            format!("seed = {}", self.seed),
            format!("grid.d = {}", self.d),
            format!("grid.periods = [{}, {}]", self.periods[0], self.periods[1]),
            format!("grid.m = {}", self.m),
            format!("exponents.p = {}", float_literal(self.p)),
            format!("exponents.q = {}", float_literal(self.q)),
            format!(
                "bank.generators = [{}]",
                self.generators
                    .iter()
                    .map(|g| string_literal(&g.to_string()))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            format!("sampling.gamma = {}", float_literal(self.gamma)),
        ];
        match &self.sampling {
            SamplingConfig::Jittered { s, eta, product } => {
                lines.push("sampling.mode = \"jittered\"".into());
                lines.push(format!("sampling.s = {}", float_literal(*s)));
                lines.push(format!("sampling.eta = {}", float_literal(*eta)));
                lines.push(format!("sampling.product = {product}"));
            }
            SamplingConfig::Random { n } => {
                lines.push("sampling.mode = \"random\"".into());
                lines.push(format!("sampling.n = {n}"));
            }
            SamplingConfig::File { path } => {
                lines.push("sampling.mode = \"file\"".into());
                lines.push(format!("sampling.file = {}", string_literal(&path.to_string_lossy())));
            }
        }
        match self.kernel_mode {
            KernelMode::Single => lines.push("kernels.mode = \"single\"".into()),
            KernelMode::PerSample { max_offset } => {
                lines.push("kernels.mode = \"per_sample\"".into());
                lines.push(format!("kernels.max_offset = {}", float_literal(max_offset)));
            }
        }
        lines.push(format!("kernels.shape = \"{}\"", self.kernel_shape));
        lines.push(format!("kernels.a = {}", float_literal(self.a)));
        lines.push(format!("kernels.m_target = {}", float_literal(self.m_target)));
        lines.push(format!("iteration.max_iter = {}", self.max_iter));
        lines.push(format!("iteration.tol = {}", float_literal(self.tol)));
        lines.push(format!("output.dir = {}", string_literal(&self.output_dir.to_string_lossy())));
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
grid.d = 1
grid.periods = [8, 8]
exponents.p = 2
exponents.q = 2
sampling.gamma = 0.5
kernels.a = 0.25
";

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config_str(text, Path::new("."))
    }

    fn errors(text: &str) -> Vec<String> {
        match parse(text) {
            Err(Error::Config(e)) => e,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.m, 16);
        assert_eq!(c.tol, 1e-10);
        assert_eq!(c.max_iter, 500);
        assert_eq!(c.seed, 0);
        assert_eq!(c.generators, vec![GeneratorSpec { shape: Shape::BSpline(4), scale: 1.0 }]);
        assert_eq!(c.sampling, SamplingConfig::Jittered { s: 0.5, eta: 0.2, product: false });
        assert_eq!(c.kernel_mode, KernelMode::Single);
        assert_eq!(c.kernel_shape, PsiShape::Box);
    }

    #[test]
    fn sections_and_dotted_keys_agree() {
        let sectioned = "
[grid]
d = 1
periods = [8, 8]
[exponents]
p = 2
q = 2
[sampling]
gamma = 0.5
[kernels]
a = 0.25
";
        assert_eq!(parse(sectioned).unwrap(), parse(MINIMAL).unwrap());
    }

    #[test]
    fn small_p_names_key_and_constraint() {
        let errs = errors(&MINIMAL.replace("exponents.p = 2", "exponents.p = 0.5"));
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("exponents.p") && errs[0].contains("p >= 1"), "{errs:?}");
    }

    #[test]
    fn large_a_names_support_rule() {
        let errs = errors(&MINIMAL.replace("kernels.a = 0.25", "kernels.a = 2"));
        assert!(errs.iter().any(|e| e.contains("kernels.a") && e.contains("support-vs-period")), "{errs:?}");
    }

    #[test]
    fn all_violations_are_reported() {
        let text = "
grid.d = 0
grid.periods = [8, 2]
exponents.p = 0.5
sampling.gamma = -1
kernels.a = 0.25
kernels.shape = \"round\"
bogus.key = 1
";
        let errs = errors(text);
        for key in ["grid.d", "grid.periods", "exponents.p", "exponents.q", "sampling.gamma", "kernels.shape", "bogus.key"] {
            assert!(errs.iter().any(|e| e.starts_with(key)), "{key} missing from {errs:?}");
        }
    }

    #[test]
    fn generator_support_must_fit() {
        let errs = errors(&format!("{MINIMAL}bank.generators = [\"bspline:4*3\"]\n"));
        assert!(errs.iter().any(|e| e.contains("bank.generators[0]") && e.contains("support-vs-period")));
    }

    #[test]
    fn echo_round_trips() {
        let full = format!(
            "{MINIMAL}seed = 99\nbank.generators = [\"bspline:4\", \"bspline:3*0.5\", \"gaussian:0.3:4\"]\n\
             kernels.mode = \"per_sample\"\nkernels.shape = \"signed\"\nkernels.m_target = 1.5\n\
             iteration.tol = 3e-11\nsampling.eta = 0.1\nsampling.product = true\noutput.dir = \"runs/a b\"\n"
        );
        for text in [MINIMAL.to_string(), full] {
            let c = parse(&text).unwrap();
            let echo = c.echo();
            assert_eq!(parse(&echo).unwrap(), c, "{echo}");
            assert_eq!(parse(&echo).unwrap().echo(), echo);
        }
        let random = parse(&MINIMAL.replace("sampling.gamma = 0.5", "sampling.gamma = 0.5\nsampling.mode = \"random\"\nsampling.n = 40")).unwrap();
        assert_eq!(parse(&random.echo()).unwrap(), random);
    }

    #[test]
    fn file_sampling_resolves_against_config_dir() {
        let text = MINIMAL.replace("sampling.gamma = 0.5", "sampling.gamma = 0.5\nsampling.mode = \"file\"\nsampling.file = \"pts.csv\"");
        let c = parse_config_str(&text, Path::new("/tmp/cfg")).unwrap();
        assert_eq!(c.sampling, SamplingConfig::File { path: PathBuf::from("/tmp/cfg/pts.csv") });
        assert_eq!(parse(&c.echo()).unwrap(), c);
        let missing = MINIMAL.replace("sampling.gamma = 0.5", "sampling.gamma = 0.5\nsampling.mode = \"file\"");
        assert!(errors(&missing).iter().any(|e| e.starts_with("sampling.file")));
    }

    #[test]
    fn generator_spec_parsing() {
        let g: GeneratorSpec = "bspline:3*0.5".parse().unwrap();
        assert_eq!(g, GeneratorSpec { shape: Shape::BSpline(3), scale: 0.5 });
        assert_eq!(g.to_string(), "bspline:3*0.5");
        assert!("bspline:3*-1".parse::<GeneratorSpec>().is_err());
        assert!("spline".parse::<GeneratorSpec>().is_err());
    }
}
