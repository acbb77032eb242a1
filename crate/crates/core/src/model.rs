//! Bias-extended rank-R CP model.
//!
//! A prediction is `Σ_r s_ir·m_jr·t_kr + a_i + b_j + c_k`. Factor matrices
//! are stored as flat row-major arrays (`rank` values per row).

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::sparse_tensor::{SparseTensor, TensorShape};

/// The six parameter groups of a [`Model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    StationFactors,
    MetricFactors,
    SlotFactors,
    StationBias,
    MetricBias,
    SlotBias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::StationFactors,
        ParamGroup::MetricFactors,
        ParamGroup::SlotFactors,
        ParamGroup::StationBias,
        ParamGroup::MetricBias,
        ParamGroup::SlotBias,
    ];
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ParamGroup::StationFactors => "S",
            ParamGroup::MetricFactors => "M",
            ParamGroup::SlotFactors => "T",
            ParamGroup::StationBias => "a",
            ParamGroup::MetricBias => "b",
            ParamGroup::SlotBias => "c",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitKind {
    #[default]
    Uniform,
}

/// How factor matrices are seeded. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitScheme {
    pub kind: InitKind,
    pub low: f64,
    pub high: f64,
    pub seed: u64,
}

impl InitScheme {
    pub fn uniform(low: f64, high: f64, seed: u64) -> Result<Self> {
        let scheme = Self {
            kind: InitKind::Uniform,
            low,
            high,
            seed,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    /// Uniform on `[0, 0.05)`.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            kind: InitKind::Uniform,
            low: 0.0,
            high: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite() && self.low < self.high) {
            return Err(Error::invalid(format!(
                "init range requires low < high, got [{}, {})",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

impl Default for InitScheme {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

/// Where the bias terms sit in the L2 regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasRegularization {
    /// Bias squares inside the sum over rank, so each is weighted by R.
    #[default]
    InsideRank,
    /// Bias squares added once per observed entry.
    OutsideRank,
}

pub(crate) struct PartsMut<'a> {
    pub s: &'a mut [f64],
    pub m: &'a mut [f64],
    pub t: &'a mut [f64],
    pub a: &'a mut [f64],
    pub b: &'a mut [f64],
    pub c: &'a mut [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    shape: TensorShape,
    rank: usize,
    s: Vec<f64>,
    m: Vec<f64>,
    t: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl Model {
    /// All-zero model.
    pub fn zeros(shape: TensorShape, rank: usize) -> Result<Self> {
        if rank == 0 {
            return Err(Error::invalid("rank must be >= 1"));
        }
        Ok(Self {
            shape,
            rank,
            s: vec![0.0; shape.n_stations * rank],
            m: vec![0.0; shape.n_metrics * rank],
            t: vec![0.0; shape.n_slots * rank],
            a: vec![0.0; shape.n_stations],
            b: vec![0.0; shape.n_metrics],
            c: vec![0.0; shape.n_slots],
        })
    }

    /// Draws S, then M, then T (each row-major) from the scheme's
    /// uniform distribution; biases are zero.
    pub fn init(shape: TensorShape, rank: usize, scheme: &InitScheme) -> Result<Self> {
        scheme.validate()?;
        let mut model = Self::zeros(shape, rank)?;
        let mut rng = SplitMix64::new(scheme.seed);
        match scheme.kind {
            InitKind::Uniform => {
                for group in [
                    ParamGroup::StationFactors,
                    ParamGroup::MetricFactors,
                    ParamGroup::SlotFactors,
                ] {
                    for v in model.group_mut(group) {
                        *v = rng.random_range(scheme.low..scheme.high);
                    }
                }
            }
        }
        Ok(model)
    }

    /// Assembles a model from explicit arrays (factor matrices row-major).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        shape: TensorShape,
        rank: usize,
        s: Vec<f64>,
        m: Vec<f64>,
        t: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeros(shape, rank)?;
        for (group, values) in ParamGroup::ALL.into_iter().zip([s, m, t, a, b, c]) {
            let slot = model.group_mut(group);
            if slot.len() != values.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{group} expects {} values, got {}",
                    slot.len(),
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{group} contains a non-finite value"
                )));
            }
            *slot = values;
        }
        Ok(model)
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        match group {
            ParamGroup::StationFactors => &self.s,
            ParamGroup::MetricFactors => &self.m,
            ParamGroup::SlotFactors => &self.t,
            ParamGroup::StationBias => &self.a,
            ParamGroup::MetricBias => &self.b,
            ParamGroup::SlotBias => &self.c,
        }
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut Vec<f64> {
        match group {
            ParamGroup::StationFactors => &mut self.s,
            ParamGroup::MetricFactors => &mut self.m,
            ParamGroup::SlotFactors => &mut self.t,
            ParamGroup::StationBias => &mut self.a,
            ParamGroup::MetricBias => &mut self.b,
            ParamGroup::SlotBias => &mut self.c,
        }
    }

    /// Disjoint mutable views of all six groups.
    pub(crate) fn parts_mut(&mut self) -> PartsMut<'_> {
        PartsMut {
            s: &mut self.s,
            m: &mut self.m,
            t: &mut self.t,
            a: &mut self.a,
            b: &mut self.b,
            c: &mut self.c,
        }
    }

    pub fn is_finite(&self) -> bool {
        ParamGroup::ALL
            .iter()
            .all(|&g| self.group(g).iter().all(|v| v.is_finite()))
    }

    pub fn predict(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.shape.check(i, j, k)?;
        Ok(self.predict_unchecked(i, j, k))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, i: usize, j: usize, k: usize) -> f64 {
        let r = self.rank;
        let (s, m, t) = (
            &self.s[i * r..(i + 1) * r],
            &self.m[j * r..(j + 1) * r],
            &self.t[k * r..(k + 1) * r],
        );
        let mut acc = 0.0;
        for x in 0..r {
            acc += s[x] * m[x] * t[x];
        }
        acc + self.a[i] + self.b[j] + self.c[k]
    }

    /// Regularized half squared error over `data`, bias squares weighted by R.
    pub fn loss(&self, data: &SparseTensor, lambda: f64) -> Result<f64> {
        self.loss_with(data, lambda, BiasRegularization::InsideRank)
    }

    pub fn loss_with(
        &self,
        data: &SparseTensor,
        lambda: f64,
        bias_reg: BiasRegularization,
    ) -> Result<f64> {
        let r = self.rank;
        let bias_weight = match bias_reg {
            BiasRegularization::InsideRank => r as f64,
            BiasRegularization::OutsideRank => 1.0,
        };
        let mut total = 0.0;
        for e in data.entries() {
            self.shape.check(e.i, e.j, e.k)?;
            let resid = e.value - self.predict_unchecked(e.i, e.j, e.k);
            let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
            let factors = sq(&self.s[e.i * r..(e.i + 1) * r])
                + sq(&self.m[e.j * r..(e.j + 1) * r])
                + sq(&self.t[e.k * r..(e.k + 1) * r]);
            let biases = self.a[e.i].powi(2) + self.b[e.j].powi(2) + self.c[e.k].powi(2);
            total += resid * resid + lambda * (factors + bias_weight * biases);
        }
        Ok(0.5 * total)
    }

    /// Writes the model as text: a `lft-model` line, `shape,I,J,K`,
    /// `rank,R`, then sections `S`, `M`, `T` (one comma-separated row per
    /// index) and `a`, `b`, `c` (one value per line), each introduced by
    /// its label on a line of its own.
    pub fn save<W: Write>(&self, mut sink: W) -> Result<()> {
        let sh = self.shape;
        writeln!(sink, "lft-model,1")?;
        writeln!(
            sink,
            "shape,{},{},{}",
            sh.n_stations, sh.n_metrics, sh.n_slots
        )?;
        writeln!(sink, "rank,{}", self.rank)?;
        for group in ParamGroup::ALL {
            writeln!(sink, "{group}")?;
            let width = if self.is_factor(group) { self.rank } else { 1 };
            for row in self.group(group).chunks(width) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(sink, "{}", line.join(","))?;
            }
        }
        sink.flush()?;
        Ok(())
    }

    pub fn save_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save(BufWriter::new(File::create(path)?))
    }

    pub fn load<R: BufRead>(source: R) -> Result<Self> {
        let mut lines = source.lines().enumerate().filter_map(|(n, l)| match l {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((n + 1, l.trim().to_string()))),
            Err(e) => Some(Err(Error::from(e))),
        });
        let mut next = |what: &str| -> Result<(usize, String)> {
            lines.next().unwrap_or_else(|| {
                Err(Error::Parse {
                    line: 0,
                    reason: format!("model file ended before {what}"),
                })
            })
        };
        let parse_err = |line: usize, reason: String| Error::Parse { line, reason };

        let (n, magic) = next("header")?;
        if magic != "lft-model,1" {
            return Err(parse_err(
                n,
                format!("expected `lft-model,1`, found `{magic}`"),
            ));
        }
        let (n, shape_line) = next("shape")?;
        let dims = labelled_usizes(&shape_line, "shape", 3).map_err(|r| parse_err(n, r))?;
        let shape =
            TensorShape::new(dims[0], dims[1], dims[2]).map_err(|e| parse_err(n, e.to_string()))?;
        let (n, rank_line) = next("rank")?;
        let rank = labelled_usizes(&rank_line, "rank", 1).map_err(|r| parse_err(n, r))?[0];

        let mut model = Self::zeros(shape, rank).map_err(|e| parse_err(n, e.to_string()))?;
        for group in ParamGroup::ALL {
            let (n, label) = next("section label")?;
            if label != group.to_string() {
                return Err(parse_err(
                    n,
                    format!("expected section `{group}`, found `{label}`"),
                ));
            }
            let width = if model.is_factor(group) { rank } else { 1 };
            let rows = model.group(group).len() / width;
            let mut values = Vec::with_capacity(rows * width);
            for _ in 0..rows {
                let (n, row) = next(&format!("section {group}"))?;
                let parsed: Vec<f64> = row
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(n, format!("bad number in {group}: {e}")))?;
                if parsed.len() != width {
                    return Err(parse_err(
                        n,
                        format!("{group} row needs {width} values, found {}", parsed.len()),
                    ));
                }
                if parsed.iter().any(|v| !v.is_finite()) {
                    return Err(parse_err(n, format!("non-finite value in {group}")));
                }
                values.extend(parsed);
            }
            *model.group_mut(group) = values;
        }
        if let Some(extra) = lines.next() {
            let (n, _) = extra?;
            return Err(parse_err(n, "trailing content after model".into()));
        }
        Ok(model)
    }

    pub fn load_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file =
            File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Self::load(BufReader::new(file)).map_err(|e| e.context(path.display().to_string()))
    }

    fn is_factor(&self, group: ParamGroup) -> bool {
        matches!(
            group,
            ParamGroup::StationFactors | ParamGroup::MetricFactors | ParamGroup::SlotFactors
        )
    }
}

fn labelled_usizes(
    line: &str,
    label: &str,
    count: usize,
) -> std::result::Result<Vec<usize>, String> {
    let mut fields = line.split(',').map(str::trim);
    if fields.next() != Some(label) {
        return Err(format!("expected `{label}` line, found `{line}`"));
    }
    let values: Vec<usize> = fields
        .map(|f| {
            f.parse::<usize>()
                .map_err(|_| format!("bad {label} value `{f}`"))
        })
        .collect::<std::result::Result<_, _>>()?;
    if values.len() != count {
        return Err(format!("`{label}` needs {count} values"));
    }
    Ok(values)
}
