//! Compact strategy strings.
//!
//! ```text
//! spec    := kind [ "(" arg { "," arg } ")" ] [ "_HB" | "_price" ]
//! kind    := family [ digits ]            e.g. StraightMU8, AverageMU64
//! arg     := key "=" value | kind         (a bare kind is BidEval's generator)
//! key     := init | gen | K | Ns | C | Ne | k | pred
//! pred    := self | uniform | scpp:NAME | point:P1/P2/...
//! ```
//!
//! Families: `StraightMV` (`SMV`), `StraightMU` (`SMU`), `AverageMU` (`AMU`),
//! `BidEval`, `BidEvalMix`, `LocalBid`, `Zero`, `Truthful`.
//!
//! Without `pred=`, a strategy bids against its own self-confirming
//! prediction, derived with the statistic named by the suffix (HB when
//! omitted). Nested generators (`init=`, `gen=`) share the outer strategy's
//! prediction and take no `pred=` or suffix.

use std::fmt;
use std::str::FromStr;

use super::{
    StrategyKind, DEFAULT_BID_EVAL_CANDIDATES, DEFAULT_BID_EVAL_SAMPLES,
    DEFAULT_LOCAL_BID_ITERATIONS, DEFAULT_LOCAL_BID_SAMPLES, DEFAULT_MIX_SAMPLES,
};
use crate::error::{Error, Result};
use crate::prediction::Statistic;

/// Where a strategy's price prediction comes from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PredictionSource {
    /// Derived for this strategy by self-confirming price search.
    SelfConfirming(Statistic),
    /// All grid prices equally likely.
    Uniform,
    /// A stored prediction looked up by name.
    Named(String),
    /// Point masses at the given integer prices.
    Point(Vec<usize>),
}

impl fmt::Display for PredictionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictionSource::SelfConfirming(_) => f.write_str("self"),
            PredictionSource::Uniform => f.write_str("uniform"),
            PredictionSource::Named(name) => write!(f, "scpp:{name}"),
            PredictionSource::Point(p) => {
                f.write_str("point:")?;
                for (i, x) in p.iter().enumerate() {
                    if i > 0 {
                        f.write_str("/")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

fn parse_source(text: &str) -> Result<PredictionSource> {
    let bad = |message: &str| Error::Parse {
        token: text.to_string(),
        message: message.to_string(),
    };
    match text {
        "self" => Ok(PredictionSource::SelfConfirming(Statistic::HighestBid)),
        "uniform" => Ok(PredictionSource::Uniform),
        _ => {
            if let Some(name) = text.strip_prefix("scpp:") {
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
                    return Err(bad("prediction names use letters, digits, `_`, `-` and `.`"));
                }
                Ok(PredictionSource::Named(name.to_string()))
            } else if let Some(points) = text.strip_prefix("point:") {
                points
                    .split('/')
                    .map(|x| x.parse::<usize>().map_err(|_| bad("point prices are nonnegative integers")))
                    .collect::<Result<_>>()
                    .map(PredictionSource::Point)
            } else {
                Err(bad("expected self, uniform, scpp:NAME or point:P1/P2/..."))
            }
        }
    }
}

/// A strategy together with the source of its prediction.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub source: PredictionSource,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind, source: PredictionSource) -> Self {
        StrategySpec { kind, source }
    }

    /// A strategy playing against its own HB self-confirming prediction.
    pub fn self_confirming(kind: StrategyKind) -> Self {
        Self::new(kind, PredictionSource::SelfConfirming(Statistic::HighestBid))
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_kind(f, self, None)
    }
}

fn write_kind(f: &mut fmt::Formatter<'_>, kind: &StrategyKind, pred: Option<&PredictionSource>) -> fmt::Result {
    let pred_arg = |f: &mut fmt::Formatter<'_>, first: bool| -> fmt::Result {
        match pred {
            Some(p) if first => write!(f, "pred={p}"),
            Some(p) => write!(f, ",pred={p}"),
            None => Ok(()),
        }
    };
    let bare = |f: &mut fmt::Formatter<'_>, name: &str| -> fmt::Result {
        f.write_str(name)?;
        if pred.is_some() {
            f.write_str("(")?;
            pred_arg(f, true)?;
            f.write_str(")")?;
        }
        Ok(())
    };
    match kind {
        StrategyKind::Zero => bare(f, "Zero"),
        StrategyKind::Truthful => bare(f, "Truthful"),
        StrategyKind::StraightMv => bare(f, "StraightMV"),
        StrategyKind::StraightMu { samples: 0 } => bare(f, "StraightMU"),
        StrategyKind::StraightMu { samples } => bare(f, &format!("StraightMU{samples}")),
        StrategyKind::AverageMu { samples } => bare(f, &format!("AverageMU{samples}")),
        StrategyKind::BidEval {
            generator,
            candidates,
            eval_samples,
        } => {
            write!(f, "BidEval(gen={generator},C={candidates},Ne={eval_samples}")?;
            pred_arg(f, false)?;
            f.write_str(")")
        }
        StrategyKind::BidEvalMix {
            samples,
            candidates,
            eval_samples,
        } => {
            write!(f, "BidEvalMix(k={samples},C={candidates},Ne={eval_samples}")?;
            pred_arg(f, false)?;
            f.write_str(")")
        }
        StrategyKind::LocalBid {
            init,
            iterations,
            samples,
        } => {
            write!(f, "LocalBid(init={init},K={iterations},Ns={samples}")?;
            pred_arg(f, false)?;
            f.write_str(")")
        }
    }
}

/// Canonical form: every parameter spelled out, `pred=` only when the
/// prediction is not self-confirming, and the statistic suffix only when it
/// is.
impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            PredictionSource::SelfConfirming(stat) => {
                write_kind(f, &self.kind, None)?;
                write!(f, "_{stat}")
            }
            other => write_kind(f, &self.kind, Some(other)),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser { text: s, pos: 0 };
        let (kind, pred) = p.kind(true)?;
        let suffix = p.suffix()?;
        if p.pos != s.len() {
            return Err(p.error_here("unexpected trailing input"));
        }
        let source = match (pred, suffix) {
            (None, stat) => PredictionSource::SelfConfirming(stat.unwrap_or(Statistic::HighestBid)),
            (Some(PredictionSource::SelfConfirming(_)), stat) => {
                PredictionSource::SelfConfirming(stat.unwrap_or(Statistic::HighestBid))
            }
            (Some(src), None) => src,
            (Some(_), Some(stat)) => {
                return Err(Error::Parse {
                    token: format!("_{stat}"),
                    message: "a statistic suffix only applies to self-confirming predictions".into(),
                })
            }
        };
        kind.validate()?;
        Ok(StrategySpec { kind, source })
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    /// Parses a bare kind, without `pred=` or a statistic suffix.
    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser { text: s, pos: 0 };
        let (kind, _) = p.kind(false)?;
        if p.pos != s.len() {
            return Err(p.error_here("unexpected trailing input"));
        }
        kind.validate()?;
        Ok(kind)
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

enum Family {
    StraightMv,
    StraightMu,
    AverageMu,
    BidEval,
    BidEvalMix,
    LocalBid,
    Zero,
    Truthful,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        let len = self.rest().find(|c: char| !f(c)).unwrap_or(self.rest().len());
        self.pos += len;
        &self.text[start..self.pos]
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn error_here(&self, message: &str) -> Error {
        let token: String = self
            .rest()
            .chars()
            .take_while(|c| !",()".contains(*c))
            .collect();
        Error::Parse {
            token: if token.is_empty() { self.rest().chars().take(1).collect() } else { token },
            message: message.to_string(),
        }
    }

    fn number(&mut self, key: &str) -> Result<usize> {
        let digits = self.take_while(|c| c.is_ascii_digit());
        digits.parse().map_err(|_| Error::Parse {
            token: key.to_string(),
            message: "expected a nonnegative integer".into(),
        })
    }

    fn kind(&mut self, top: bool) -> Result<(StrategyKind, Option<PredictionSource>)> {
        let name = self.take_while(|c| c.is_ascii_alphabetic());
        let family = match name {
            "StraightMV" | "SMV" => Family::StraightMv,
            "StraightMU" | "SMU" => Family::StraightMu,
            "AverageMU" | "AMU" => Family::AverageMu,
            "BidEval" => Family::BidEval,
            "BidEvalMix" => Family::BidEvalMix,
            "LocalBid" => Family::LocalBid,
            "Zero" => Family::Zero,
            "Truthful" => Family::Truthful,
            "" => return Err(self.error_here("expected a strategy name")),
            other => {
                let digits_follow = self.peek().is_some_and(|c| c.is_ascii_digit());
                let mut token = other.to_string();
                if digits_follow {
                    token.push_str(self.take_while(|c| c.is_ascii_digit()));
                }
                return Err(Error::UnknownStrategy(token));
            }
        };
        let digits = self.take_while(|c| c.is_ascii_digit());
        let count: Option<usize> = if digits.is_empty() {
            None
        } else {
            Some(digits.parse().map_err(|_| Error::Parse {
                token: format!("{name}{digits}"),
                message: "sample count out of range".into(),
            })?)
        };

        let mut init = None;
        let mut gen = None;
        let mut iterations = None;
        let mut samples = None;
        let mut candidates = None;
        let mut eval_samples = None;
        let mut k = None;
        let mut pred = None;

        if self.eat('(') {
            loop {
                let save = self.pos;
                let key = self.take_while(|c| c.is_ascii_alphanumeric());
                if self.eat('=') {
                    match key {
                        "init" => init = Some(self.kind(false)?.0),
                        "gen" => gen = Some(self.kind(false)?.0),
                        "K" => iterations = Some(self.number(key)?),
                        "Ns" => samples = Some(self.number(key)?),
                        "C" => candidates = Some(self.number(key)?),
                        "Ne" => eval_samples = Some(self.number(key)?),
                        "k" => k = Some(self.number(key)?),
                        "pred" if top => {
                            let value = self.take_while(|c| !",()".contains(c));
                            pred = Some(parse_source(value)?);
                        }
                        "pred" => {
                            return Err(Error::Parse {
                                token: "pred".into(),
                                message: "nested generators share the outer prediction".into(),
                            })
                        }
                        other => {
                            return Err(Error::Parse {
                                token: other.to_string(),
                                message: "unknown parameter".into(),
                            })
                        }
                    }
                } else {
                    // positional generator, as in BidEval(StraightMU8)
                    self.pos = save;
                    gen = Some(self.kind(false)?.0);
                }
                if self.eat(')') {
                    break;
                }
                if !self.eat(',') {
                    return Err(self.error_here("expected `,` or `)`"));
                }
            }
        }

        let reject = |what: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::Parse {
                    token: name.to_string(),
                    message: format!("{name} takes no {what}"),
                })
            } else {
                Ok(())
            }
        };
        let no_args = init.is_none()
            && gen.is_none()
            && iterations.is_none()
            && samples.is_none()
            && candidates.is_none()
            && eval_samples.is_none()
            && k.is_none();

        let kind = match family {
            Family::Zero | Family::Truthful | Family::StraightMv => {
                reject("sample count", count.is_some())?;
                reject("parameters other than pred", !no_args)?;
                match family {
                    Family::Zero => StrategyKind::Zero,
                    Family::Truthful => StrategyKind::Truthful,
                    _ => StrategyKind::StraightMv,
                }
            }
            Family::StraightMu | Family::AverageMu => {
                reject("parameters other than pred", !no_args)?;
                match family {
                    Family::StraightMu => StrategyKind::StraightMu {
                        samples: count.unwrap_or(0),
                    },
                    _ => StrategyKind::AverageMu {
                        samples: count.ok_or_else(|| Error::Parse {
                            token: name.to_string(),
                            message: "AverageMU needs a sample count, e.g. AverageMU64".into(),
                        })?,
                    },
                }
            }
            Family::BidEval => {
                reject("sample count suffix", count.is_some())?;
                reject("init, K, Ns or k", init.is_some() || iterations.is_some() || samples.is_some() || k.is_some())?;
                StrategyKind::BidEval {
                    generator: Box::new(gen.ok_or_else(|| Error::Parse {
                        token: name.to_string(),
                        message: "BidEval needs a candidate generator, e.g. BidEval(StraightMU8)".into(),
                    })?),
                    candidates: candidates.unwrap_or(DEFAULT_BID_EVAL_CANDIDATES),
                    eval_samples: eval_samples.unwrap_or(DEFAULT_BID_EVAL_SAMPLES),
                }
            }
            Family::BidEvalMix => {
                reject("init, gen, K or Ns", init.is_some() || gen.is_some() || iterations.is_some() || samples.is_some())?;
                if count.is_some() && k.is_some() {
                    return Err(Error::Parse {
                        token: name.to_string(),
                        message: "give the sample count once".into(),
                    });
                }
                StrategyKind::BidEvalMix {
                    samples: count.or(k).unwrap_or(DEFAULT_MIX_SAMPLES),
                    candidates: candidates.unwrap_or(DEFAULT_BID_EVAL_CANDIDATES),
                    eval_samples: eval_samples.unwrap_or(DEFAULT_BID_EVAL_SAMPLES),
                }
            }
            Family::LocalBid => {
                reject("sample count suffix", count.is_some())?;
                reject("gen, C, Ne or k", gen.is_some() || candidates.is_some() || eval_samples.is_some() || k.is_some())?;
                StrategyKind::LocalBid {
                    init: Box::new(init.unwrap_or(StrategyKind::StraightMu { samples: 8 })),
                    iterations: iterations.unwrap_or(DEFAULT_LOCAL_BID_ITERATIONS),
                    samples: samples.unwrap_or(DEFAULT_LOCAL_BID_SAMPLES),
                }
            }
        };
        Ok((kind, pred))
    }

    fn suffix(&mut self) -> Result<Option<Statistic>> {
        if !self.eat('_') {
            return Ok(None);
        }
        let tag = self.take_while(|c| c.is_ascii_alphanumeric());
        tag.parse::<Statistic>().map(Some).map_err(|_| Error::Parse {
            token: format!("_{tag}"),
            message: "statistic suffix must be _HB or _price".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> StrategySpec {
        s.parse().unwrap_or_else(|e| panic!("{s}: {e}"))
    }

    #[test]
    fn parses_documented_examples() {
        let s = parse("LocalBid(init=StraightMU8,K=10,Ns=64,pred=scpp:U53_HB)");
        assert_eq!(
            s.kind,
            StrategyKind::LocalBid {
                init: Box::new(StrategyKind::StraightMu { samples: 8 }),
                iterations: 10,
                samples: 64
            }
        );
        assert_eq!(s.source, PredictionSource::Named("U53_HB".into()));

        let s = parse("AverageMU64_HB");
        assert_eq!(s.kind, StrategyKind::AverageMu { samples: 64 });
        assert_eq!(s.source, PredictionSource::SelfConfirming(Statistic::HighestBid));

        let s = parse("BidEval(SMU8)_price");
        assert_eq!(s.kind, StrategyKind::bid_eval(StrategyKind::StraightMu { samples: 8 }));
        assert_eq!(s.source, PredictionSource::SelfConfirming(Statistic::Price));
        assert_eq!(s.to_string(), "BidEval(gen=StraightMU8,C=10,Ne=64)_price");
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(parse("StraightMU").to_string(), "StraightMU_HB");
        assert_eq!(parse("SMV(pred=point:3/4/5)").to_string(), "StraightMV(pred=point:3/4/5)");
        assert_eq!(parse("LocalBid").to_string(), "LocalBid(init=StraightMU8,K=10,Ns=64)_HB");
        assert_eq!(parse("BidEvalMix(C=6)").to_string(), "BidEvalMix(k=8,C=6,Ne=64)_HB");
        assert_eq!(parse("Zero(pred=uniform)").to_string(), "Zero(pred=uniform)");
        assert_eq!(parse("AMU8(pred=self)_price").to_string(), "AverageMU8_price");
    }

    #[test]
    fn unknown_strategies_name_the_token() {
        match "StraightXY8".parse::<StrategySpec>() {
            Err(Error::UnknownStrategy(t)) => assert_eq!(t, "StraightXY8"),
            other => panic!("{other:?}"),
        }
        match "LocalBid(init=Bogus3,K=2)".parse::<StrategySpec>() {
            Err(Error::UnknownStrategy(t)) => assert_eq!(t, "Bogus3"),
            other => panic!("{other:?}"),
        }
        match "LocalBid(Q=3)".parse::<StrategySpec>() {
            Err(Error::Parse { token, .. }) => assert_eq!(token, "Q"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_strings() {
        for bad in [
            "",
            "AverageMU",
            "AverageMU0",
            "StraightMV8",
            "LocalBid(K=0)",
            "LocalBid(init=SMU8(pred=uniform))",
            "BidEval",
            "BidEval(gen=SMU8,C=0)",
            "StraightMU8_XX",
            "StraightMU8(pred=uniform)_HB",
            "StraightMU8(pred=scpp:)",
            "StraightMU8(pred=point:1/x)",
            "LocalBid(K=3",
            "StraightMU8 ",
        ] {
            assert!(bad.parse::<StrategySpec>().is_err(), "{bad:?} parsed");
        }
    }

    fn kind_strategy() -> impl proptest::strategy::Strategy<Value = StrategyKind> {
        let leaf = prop_oneof![
            Just(StrategyKind::Zero),
            Just(StrategyKind::Truthful),
            Just(StrategyKind::StraightMv),
            (0usize..100).prop_map(|samples| StrategyKind::StraightMu { samples }),
            (1usize..100).prop_map(|samples| StrategyKind::AverageMu { samples }),
            (1usize..20, 1usize..20, 0usize..100).prop_map(|(samples, candidates, eval_samples)| {
                StrategyKind::BidEvalMix { samples, candidates, eval_samples }
            }),
        ];
        leaf.prop_recursive(2, 8, 1, |inner| {
            prop_oneof![
                (inner.clone(), 1usize..20, 0usize..100).prop_map(|(g, candidates, eval_samples)| {
                    StrategyKind::BidEval { generator: Box::new(g), candidates, eval_samples }
                }),
                (inner, 1usize..20, 0usize..100).prop_map(|(i, iterations, samples)| {
                    StrategyKind::LocalBid { init: Box::new(i), iterations, samples }
                }),
            ]
        })
    }

    fn source_strategy() -> impl proptest::strategy::Strategy<Value = PredictionSource> {
        prop_oneof![
            Just(PredictionSource::SelfConfirming(Statistic::HighestBid)),
            Just(PredictionSource::SelfConfirming(Statistic::Price)),
            Just(PredictionSource::Uniform),
            "[A-Za-z0-9_]{1,8}".prop_map(PredictionSource::Named),
            proptest::collection::vec(0usize..200, 1..6).prop_map(PredictionSource::Point),
        ]
    }

    proptest! {
        #[test]
        fn canonical_form_round_trips(kind in kind_strategy(), source in source_strategy()) {
            let spec = StrategySpec::new(kind, source);
            let text = spec.to_string();
            let back: StrategySpec = text.parse().unwrap();
            prop_assert_eq!(&back, &spec);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}
