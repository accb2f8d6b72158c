//! Line-oriented scenario format.
//!
//! One directive per line, `keyword` followed by positional words and
//! `key=value` pairs; `#` starts a comment. The grammar needs no nesting:
//! a scenario is a preparation (source + elements), optional measurement
//! declarations, run parameters, and at most one `run` directive
//! dispatching to the interferometer, the steering session, or the
//! wavepacket sweep. `HV`, `DIAG`, `CIRC` and `PATH` are reserved basis
//! words.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use steersim_core::qstate::{Path, Pol};

/// Parse-stage failure with position information.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
    pub expected: Vec<&'static str>,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

/// Semantic failure on a well-formed scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticError {
    pub message: String,
}

impl std::fmt::Display for SemanticError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for SemanticError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub pol: Pol,
    pub path: Path,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementSpec {
    Hwp { theta: f64, path: Path },
    Pbs,
    Bs50,
    Polarizer { alpha: f64, path: Path },
    QPlate { path: Path },
    Absorber { path: Path },
    Phase { phi: f64, path: Path },
    Mirror { path: Path },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec {
    pub basis: String,
    pub path: Option<Path>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutSpec {
    pub alice: f64,
    pub bob: f64,
    pub fiber_delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgSpec {
    pub sigma0: f64,
    pub mu_c: f64,
    pub b: f64,
    pub b0: f64,
    pub m: f64,
    pub hbar: f64,
}

impl Default for SgSpec {
    fn default() -> Self {
        Self { sigma0: 1.0, mu_c: 1.0, b: 1.0, b0: 0.0, m: 1.0, hbar: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IfmVariantSpec {
    Empty,
    Absorber,
    Polarizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategySpec {
    Quantum,
    Lhs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleSpec {
    Optimal,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunSpec {
    Ifm {
        variant: IfmVariantSpec,
        alpha: Option<f64>,
        trials: Option<u64>,
        seed: Option<u64>,
    },
    Steering {
        strategy: StrategySpec,
        ensemble: Option<EnsembleSpec>,
        ensemble_seed: Option<u64>,
    },
    Sweep {
        t_min: f64,
        t_max: f64,
        points: u64,
    },
}

/// A parsed scenario.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub name: Option<String>,
    pub source: Option<SourceSpec>,
    pub elements: Vec<ElementSpec>,
    pub measures: Vec<MeasureSpec>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub layout: Option<LayoutSpec>,
    pub format: Option<OutFormat>,
    pub sg: Option<SgSpec>,
    pub run: Option<RunSpec>,
}

struct Token<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch == '#' {
            break;
        }
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token { text: &line[s..i], col: s + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        let end = line.find('#').unwrap_or(line.len());
        tokens.push(Token { text: line[s..end].trim_end(), col: s + 1 });
    }
    tokens
}

struct LineCtx<'a> {
    line_no: usize,
    keyword: &'a Token<'a>,
    rest: &'a [Token<'a>],
}

impl<'a> LineCtx<'a> {
    fn err(&self, col: usize, message: String, expected: Vec<&'static str>) -> ParseError {
        ParseError { line: self.line_no, col, message, expected }
    }

    /// Positional (non key=value) tokens.
    fn positional(&self) -> Vec<&Token<'a>> {
        self.rest.iter().filter(|t| !t.text.contains('=')).collect()
    }

    fn kv(&self) -> Vec<(&'a str, &'a str, usize)> {
        self.rest
            .iter()
            .filter_map(|t| {
                t.text.split_once('=').map(|(k, v)| {
                    (k, v, t.col + k.len() + 1)
                })
            })
            .collect()
    }

    fn check_keys(&self, allowed: &[&'static str]) -> Result<(), ParseError> {
        for (k, _, _) in self.kv() {
            if !allowed.contains(&k) {
                let token = self.rest.iter().find(|t| t.text.starts_with(k)).unwrap();
                return Err(self.err(
                    token.col,
                    format!("unknown key `{k}`"),
                    allowed.to_vec(),
                ));
            }
        }
        Ok(())
    }

    fn get_f64(&self, key: &'static str) -> Result<Option<f64>, ParseError> {
        for (k, v, col) in self.kv() {
            if k == key {
                return v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| self.err(col, format!("`{v}` is not a number"), vec![]));
            }
        }
        Ok(None)
    }

    fn get_u64(&self, key: &'static str) -> Result<Option<u64>, ParseError> {
        for (k, v, col) in self.kv() {
            if k == key {
                return v.parse::<u64>().map(Some).map_err(|_| {
                    self.err(col, format!("`{v}` is not a non-negative integer"), vec![])
                });
            }
        }
        Ok(None)
    }

    fn get_path(&self, key: &'static str) -> Result<Option<Path>, ParseError> {
        for (k, v, col) in self.kv() {
            if k == key {
                return match v {
                    "A" => Ok(Some(Path::A)),
                    "B" => Ok(Some(Path::B)),
                    _ => Err(self.err(col, format!("`{v}` is not a path"), vec!["A", "B"])),
                };
            }
        }
        Ok(None)
    }

    fn get_word(&self, key: &'static str) -> Option<(&'a str, usize)> {
        self.kv().into_iter().find(|(k, _, _)| *k == key).map(|(_, v, col)| (v, col))
    }
}

const KEYWORDS: [&str; 10] = [
    "name", "source", "element", "measure", "trials", "seed", "layout", "format", "sg", "run",
];

/// Parses scenario text; positions in errors are 1-based.
pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let mut scenario = Scenario::default();
    let mut seen_once: BTreeMap<&'static str, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let tokens = tokenize(raw);
        if tokens.is_empty() {
            continue;
        }
        let ctx = LineCtx { line_no, keyword: &tokens[0], rest: &tokens[1..] };
        let mut once = |what: &'static str| -> Result<(), ParseError> {
            if let Some(prev) = seen_once.insert(what, line_no) {
                return Err(ctx.err(
                    ctx.keyword.col,
                    format!("duplicate `{what}` directive (first on line {prev})"),
                    vec![],
                ));
            }
            Ok(())
        };
        match ctx.keyword.text {
            "name" => {
                once("name")?;
                let words = ctx.positional();
                if words.len() != 1 {
                    return Err(ctx.err(
                        ctx.keyword.col,
                        "name takes exactly one word".into(),
                        vec![],
                    ));
                }
                scenario.name = Some(words[0].text.to_string());
            }
            "source" => {
                once("source")?;
                let words = ctx.positional();
                if words.len() != 2 || words[0].text != "heralded" {
                    return Err(ctx.err(
                        ctx.keyword.col,
                        "source directive is `source heralded <H|V>`".into(),
                        vec!["heralded"],
                    ));
                }
                let pol = match words[1].text {
                    "H" => Pol::H,
                    "V" => Pol::V,
                    other => {
                        return Err(ctx.err(
                            words[1].col,
                            format!("`{other}` is not a polarization"),
                            vec!["H", "V"],
                        ))
                    }
                };
                ctx.check_keys(&["path"])?;
                scenario.source = Some(SourceSpec {
                    pol,
                    path: ctx.get_path("path")?.unwrap_or(Path::A),
                });
            }
            "element" => {
                let words = ctx.positional();
                if words.is_empty() {
                    return Err(ctx.err(
                        ctx.keyword.col,
                        "element needs a kind".into(),
                        vec!["hwp", "pbs", "bs50", "polarizer", "qplate", "absorber", "phase", "mirror"],
                    ));
                }
                let kind = words[0];
                let element = match kind.text {
                    "hwp" => {
                        ctx.check_keys(&["theta", "path"])?;
                        let theta = ctx.get_f64("theta")?.ok_or_else(|| {
                            ctx.err(kind.col, "hwp needs theta=<degrees>".into(), vec![])
                        })?;
                        ElementSpec::Hwp { theta, path: ctx.get_path("path")?.unwrap_or(Path::A) }
                    }
                    "pbs" => {
                        ctx.check_keys(&[])?;
                        ElementSpec::Pbs
                    }
                    "bs50" => {
                        ctx.check_keys(&[])?;
                        ElementSpec::Bs50
                    }
                    "polarizer" => {
                        ctx.check_keys(&["alpha", "path"])?;
                        let alpha = ctx.get_f64("alpha")?.ok_or_else(|| {
                            ctx.err(kind.col, "polarizer needs alpha=<degrees>".into(), vec![])
                        })?;
                        let path = ctx.get_path("path")?.ok_or_else(|| {
                            ctx.err(kind.col, "polarizer needs path=<A|B>".into(), vec![])
                        })?;
                        ElementSpec::Polarizer { alpha, path }
                    }
                    "qplate" => {
                        ctx.check_keys(&["path"])?;
                        ElementSpec::QPlate { path: ctx.get_path("path")?.unwrap_or(Path::A) }
                    }
                    "absorber" => {
                        ctx.check_keys(&["path"])?;
                        let path = ctx.get_path("path")?.ok_or_else(|| {
                            ctx.err(kind.col, "absorber needs path=<A|B>".into(), vec![])
                        })?;
                        ElementSpec::Absorber { path }
                    }
                    "phase" => {
                        ctx.check_keys(&["phi", "path"])?;
                        let phi = ctx.get_f64("phi")?.ok_or_else(|| {
                            ctx.err(kind.col, "phase needs phi=<radians>".into(), vec![])
                        })?;
                        let path = ctx.get_path("path")?.ok_or_else(|| {
                            ctx.err(kind.col, "phase needs path=<A|B>".into(), vec![])
                        })?;
                        ElementSpec::Phase { phi, path }
                    }
                    "mirror" => {
                        ctx.check_keys(&["path"])?;
                        let path = ctx.get_path("path")?.ok_or_else(|| {
                            ctx.err(kind.col, "mirror needs path=<A|B>".into(), vec![])
                        })?;
                        ElementSpec::Mirror { path }
                    }
                    other => {
                        return Err(ctx.err(
                            kind.col,
                            format!("unknown element `{other}`"),
                            vec!["hwp", "pbs", "bs50", "polarizer", "qplate", "absorber", "phase", "mirror"],
                        ))
                    }
                };
                scenario.elements.push(element);
            }
            "measure" => {
                let words = ctx.positional();
                if words.len() != 1 || words[0].text != "alice" {
                    return Err(ctx.err(
                        ctx.keyword.col,
                        "measure directive is `measure alice basis=<...>`".into(),
                        vec!["alice"],
                    ));
                }
                ctx.check_keys(&["basis", "path"])?;
                let (basis, col) = ctx.get_word("basis").ok_or_else(|| {
                    ctx.err(ctx.keyword.col, "measure needs basis=<...>".into(), vec![])
                })?;
                if !["HV", "DIAG", "CIRC", "PATH"].contains(&basis) {
                    return Err(ctx.err(
                        col,
                        format!("unknown basis `{basis}`"),
                        vec!["HV", "DIAG", "CIRC", "PATH"],
                    ));
                }
                scenario.measures.push(MeasureSpec {
                    basis: basis.to_string(),
                    path: ctx.get_path("path")?,
                });
            }
            "trials" => {
                once("trials")?;
                let words = ctx.positional();
                if words.len() != 1 {
                    return Err(ctx.err(ctx.keyword.col, "trials takes one integer".into(), vec![]));
                }
                scenario.trials = Some(words[0].text.parse::<u64>().map_err(|_| {
                    ctx.err(words[0].col, format!("`{}` is not an integer", words[0].text), vec![])
                })?);
            }
            "seed" => {
                once("seed")?;
                let words = ctx.positional();
                if words.len() != 1 {
                    return Err(ctx.err(ctx.keyword.col, "seed takes one integer".into(), vec![]));
                }
                scenario.seed = Some(words[0].text.parse::<u64>().map_err(|_| {
                    ctx.err(words[0].col, format!("`{}` is not an integer", words[0].text), vec![])
                })?);
            }
            "layout" => {
                once("layout")?;
                ctx.check_keys(&["alice", "bob", "fiber_delay"])?;
                let missing = |what: &'static str| {
                    ctx.err(ctx.keyword.col, format!("layout needs {what}=<number>"), vec![])
                };
                scenario.layout = Some(LayoutSpec {
                    alice: ctx.get_f64("alice")?.ok_or_else(|| missing("alice"))?,
                    bob: ctx.get_f64("bob")?.ok_or_else(|| missing("bob"))?,
                    fiber_delay: ctx
                        .get_f64("fiber_delay")?
                        .ok_or_else(|| missing("fiber_delay"))?,
                });
            }
            "format" => {
                once("format")?;
                let words = ctx.positional();
                let which = words.first().map(|t| t.text).unwrap_or("");
                scenario.format = Some(match which {
                    "json" => OutFormat::Json,
                    "csv" => OutFormat::Csv,
                    other => {
                        return Err(ctx.err(
                            words.first().map(|t| t.col).unwrap_or(ctx.keyword.col),
                            format!("unknown format `{other}`"),
                            vec!["json", "csv"],
                        ))
                    }
                });
            }
            "sg" => {
                once("sg")?;
                ctx.check_keys(&["sigma0", "mu_c", "b", "b0", "m", "hbar"])?;
                let d = SgSpec::default();
                scenario.sg = Some(SgSpec {
                    sigma0: ctx.get_f64("sigma0")?.unwrap_or(d.sigma0),
                    mu_c: ctx.get_f64("mu_c")?.unwrap_or(d.mu_c),
                    b: ctx.get_f64("b")?.unwrap_or(d.b),
                    b0: ctx.get_f64("b0")?.unwrap_or(d.b0),
                    m: ctx.get_f64("m")?.unwrap_or(d.m),
                    hbar: ctx.get_f64("hbar")?.unwrap_or(d.hbar),
                });
            }
            "run" => {
                once("run")?;
                let words = ctx.positional();
                let kind = words.first().map(|t| t.text).unwrap_or("");
                scenario.run = Some(match kind {
                    "ifm" => {
                        ctx.check_keys(&["variant", "alpha", "trials", "seed"])?;
                        let (variant, col) = ctx.get_word("variant").ok_or_else(|| {
                            ctx.err(ctx.keyword.col, "run ifm needs variant=<...>".into(), vec![])
                        })?;
                        let variant = match variant {
                            "empty" => IfmVariantSpec::Empty,
                            "absorber" => IfmVariantSpec::Absorber,
                            "polarizer" => IfmVariantSpec::Polarizer,
                            other => {
                                return Err(ctx.err(
                                    col,
                                    format!("unknown variant `{other}`"),
                                    vec!["empty", "absorber", "polarizer"],
                                ))
                            }
                        };
                        RunSpec::Ifm {
                            variant,
                            alpha: ctx.get_f64("alpha")?,
                            trials: ctx.get_u64("trials")?,
                            seed: ctx.get_u64("seed")?,
                        }
                    }
                    "steering" => {
                        ctx.check_keys(&["strategy", "ensemble", "ensemble_seed"])?;
                        let strategy = match ctx.get_word("strategy") {
                            None => StrategySpec::Quantum,
                            Some(("quantum", _)) => StrategySpec::Quantum,
                            Some(("lhs", _)) => StrategySpec::Lhs,
                            Some((other, col)) => {
                                return Err(ctx.err(
                                    col,
                                    format!("unknown strategy `{other}`"),
                                    vec!["quantum", "lhs"],
                                ))
                            }
                        };
                        let ensemble = match ctx.get_word("ensemble") {
                            None => None,
                            Some(("optimal", _)) => Some(EnsembleSpec::Optimal),
                            Some(("random", _)) => Some(EnsembleSpec::Random),
                            Some((other, col)) => {
                                return Err(ctx.err(
                                    col,
                                    format!("unknown ensemble `{other}`"),
                                    vec!["optimal", "random"],
                                ))
                            }
                        };
                        RunSpec::Steering {
                            strategy,
                            ensemble,
                            ensemble_seed: ctx.get_u64("ensemble_seed")?,
                        }
                    }
                    "sweep" => {
                        ctx.check_keys(&["tmin", "tmax", "points"])?;
                        RunSpec::Sweep {
                            t_min: ctx.get_f64("tmin")?.unwrap_or(0.0),
                            t_max: ctx.get_f64("tmax")?.ok_or_else(|| {
                                ctx.err(ctx.keyword.col, "run sweep needs tmax=<time>".into(), vec![])
                            })?,
                            points: ctx.get_u64("points")?.ok_or_else(|| {
                                ctx.err(ctx.keyword.col, "run sweep needs points=<N>".into(), vec![])
                            })?,
                        }
                    }
                    other => {
                        return Err(ctx.err(
                            words.first().map(|t| t.col).unwrap_or(ctx.keyword.col),
                            format!("unknown run kind `{other}`"),
                            vec!["ifm", "steering", "sweep"],
                        ))
                    }
                });
            }
            other => {
                return Err(ParseError {
                    line: line_no,
                    col: tokens[0].col,
                    message: format!("unknown keyword `{other}`"),
                    expected: KEYWORDS.to_vec(),
                })
            }
        }
    }
    Ok(scenario)
}

impl Scenario {
    /// Effective trial count and seed of a run directive, falling back to
    /// the standalone lines.
    pub fn effective_trials(&self) -> Option<u64> {
        match &self.run {
            Some(RunSpec::Ifm { trials, .. }) => trials.or(self.trials),
            _ => self.trials,
        }
    }

    pub fn effective_seed(&self) -> Option<u64> {
        match &self.run {
            Some(RunSpec::Ifm { seed, .. }) => seed.or(self.seed),
            _ => self.seed,
        }
    }

    /// Whether any block samples randomness.
    pub fn samples(&self) -> bool {
        match &self.run {
            Some(RunSpec::Ifm { .. }) | Some(RunSpec::Steering { .. }) => true,
            Some(RunSpec::Sweep { .. }) => false,
            None => self.trials.is_some() && !self.measures.is_empty(),
        }
    }

    /// Semantic validation of a parsed scenario.
    pub fn validate(&self) -> Result<(), SemanticError> {
        let fail = |message: String| Err(SemanticError { message });
        if self.samples() && self.effective_seed().is_none() {
            return fail("sampling requested but no seed given".into());
        }
        if !self.elements.is_empty() && self.source.is_none() {
            return fail("elements declared without a source".into());
        }
        if !self.measures.is_empty() && self.source.is_none() {
            return fail("measurements declared without a source".into());
        }
        for m in &self.measures {
            if m.basis == "PATH" && m.path.is_none() {
                return fail("PATH measurement needs path=<A|B>".into());
            }
        }
        match &self.run {
            Some(RunSpec::Ifm { variant, alpha, .. }) => {
                if self.effective_trials().is_none() {
                    return fail("run ifm needs trials".into());
                }
                if !self.elements.is_empty() {
                    return fail(
                        "run ifm builds its own interferometer; remove element lines".into(),
                    );
                }
                if alpha.is_some() && *variant != IfmVariantSpec::Polarizer {
                    return fail("alpha applies to the polarizer variant only".into());
                }
            }
            Some(RunSpec::Steering { strategy, ensemble, .. }) => {
                if self.trials.is_none() {
                    return fail("run steering needs a trials line".into());
                }
                if *strategy == StrategySpec::Quantum && ensemble.is_some() {
                    return fail("ensemble applies to the lhs strategy only".into());
                }
                if *strategy == StrategySpec::Lhs && ensemble.is_none() {
                    return fail("lhs strategy needs ensemble=<optimal|random>".into());
                }
            }
            Some(RunSpec::Sweep { t_min, t_max, points }) => {
                if *points < 2 {
                    return fail("sweep needs at least 2 points".into());
                }
                if !(t_max > t_min) || *t_min < 0.0 {
                    return fail("sweep needs 0 <= tmin < tmax".into());
                }
                if !self.elements.is_empty() || !self.measures.is_empty() {
                    return fail("sweep does not take circuit lines".into());
                }
            }
            None => {}
        }
        if self.format == Some(OutFormat::Csv)
            && !matches!(self.run, Some(RunSpec::Sweep { .. }))
        {
            return fail("csv output is defined for sweep runs only".into());
        }
        Ok(())
    }

    /// Canonical text form; parsing it back yields an identical value.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let path_str = |p: Path| match p {
            Path::A => "A",
            Path::B => "B",
        };
        if let Some(name) = &self.name {
            let _ = writeln!(out, "name {name}");
        }
        if let Some(source) = &self.source {
            let pol = match source.pol {
                Pol::H => "H",
                Pol::V => "V",
            };
            let _ = writeln!(out, "source heralded {pol} path={}", path_str(source.path));
        }
        for element in &self.elements {
            match element {
                ElementSpec::Hwp { theta, path } => {
                    let _ = writeln!(out, "element hwp theta={theta} path={}", path_str(*path));
                }
                ElementSpec::Pbs => {
                    let _ = writeln!(out, "element pbs");
                }
                ElementSpec::Bs50 => {
                    let _ = writeln!(out, "element bs50");
                }
                ElementSpec::Polarizer { alpha, path } => {
                    let _ = writeln!(
                        out,
                        "element polarizer alpha={alpha} path={}",
                        path_str(*path)
                    );
                }
                ElementSpec::QPlate { path } => {
                    let _ = writeln!(out, "element qplate path={}", path_str(*path));
                }
                ElementSpec::Absorber { path } => {
                    let _ = writeln!(out, "element absorber path={}", path_str(*path));
                }
                ElementSpec::Phase { phi, path } => {
                    let _ = writeln!(out, "element phase phi={phi} path={}", path_str(*path));
                }
                ElementSpec::Mirror { path } => {
                    let _ = writeln!(out, "element mirror path={}", path_str(*path));
                }
            }
        }
        for m in &self.measures {
            let _ = write!(out, "measure alice basis={}", m.basis);
            if let Some(p) = m.path {
                let _ = write!(out, " path={}", path_str(p));
            }
            let _ = writeln!(out);
        }
        if let Some(sg) = &self.sg {
            let _ = writeln!(
                out,
                "sg sigma0={} mu_c={} b={} b0={} m={} hbar={}",
                sg.sigma0, sg.mu_c, sg.b, sg.b0, sg.m, sg.hbar
            );
        }
        if let Some(layout) = &self.layout {
            let _ = writeln!(
                out,
                "layout alice={} bob={} fiber_delay={}",
                layout.alice, layout.bob, layout.fiber_delay
            );
        }
        if let Some(trials) = self.trials {
            let _ = writeln!(out, "trials {trials}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed {seed}");
        }
        if let Some(format) = self.format {
            let _ = writeln!(
                out,
                "format {}",
                match format {
                    OutFormat::Json => "json",
                    OutFormat::Csv => "csv",
                }
            );
        }
        if let Some(run) = &self.run {
            match run {
                RunSpec::Ifm { variant, alpha, trials, seed } => {
                    let v = match variant {
                        IfmVariantSpec::Empty => "empty",
                        IfmVariantSpec::Absorber => "absorber",
                        IfmVariantSpec::Polarizer => "polarizer",
                    };
                    let _ = write!(out, "run ifm variant={v}");
                    if let Some(alpha) = alpha {
                        let _ = write!(out, " alpha={alpha}");
                    }
                    if let Some(trials) = trials {
                        let _ = write!(out, " trials={trials}");
                    }
                    if let Some(seed) = seed {
                        let _ = write!(out, " seed={seed}");
                    }
                    let _ = writeln!(out);
                }
                RunSpec::Steering { strategy, ensemble, ensemble_seed } => {
                    let s = match strategy {
                        StrategySpec::Quantum => "quantum",
                        StrategySpec::Lhs => "lhs",
                    };
                    let _ = write!(out, "run steering strategy={s}");
                    if let Some(e) = ensemble {
                        let _ = write!(
                            out,
                            " ensemble={}",
                            match e {
                                EnsembleSpec::Optimal => "optimal",
                                EnsembleSpec::Random => "random",
                            }
                        );
                    }
                    if let Some(es) = ensemble_seed {
                        let _ = write!(out, " ensemble_seed={es}");
                    }
                    let _ = writeln!(out);
                }
                RunSpec::Sweep { t_min, t_max, points } => {
                    let _ = writeln!(out, "run sweep tmin={t_min} tmax={t_max} points={points}");
                }
            }
        }
        out
    }
}

/// Built-in scenarios shipped with the binary.
pub const BUILTINS: [(&str, &str); 6] = [
    ("fig2-steering", include_str!("../scenarios/fig2-steering.scn")),
    ("ifm-absorber", include_str!("../scenarios/ifm-absorber.scn")),
    ("ifm-polarizer", include_str!("../scenarios/ifm-polarizer.scn")),
    ("qplate", include_str!("../scenarios/qplate.scn")),
    ("sg-sweep", include_str!("../scenarios/sg-sweep.scn")),
    ("lhs-adversary", include_str!("../scenarios/lhs-adversary.scn")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
