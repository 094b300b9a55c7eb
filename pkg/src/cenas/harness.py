"""Experiment orchestration, trajectory diagnostics and CSV artifacts."""
from __future__ import annotations

import csv
import datetime as _dt
import io
import math
import warnings
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import arch_space as A
from . import ce_engine as ce
from .error_channel import FULL as CH_FULL, DELTA as CH_DELTA, MarkovErrorParams
from .novelty import NoveltyFilter, collapse_diagnostics, separation_check, shingles
from . import proxy_stats as ps

CYCLE_COLUMNS = ("llm", "cycle", "valid_rate", "elite_concentration", "mean_quality", "admissions")
CYCLE_EXTRA = (
    "corpus_size",
    "n_valid",
    "elite_concentration_exact",
    "elite_concentration_se",
    "mean_quality_se",
)
PROXY_COLUMNS = ("llm", "arch_id", "dataset", "proxy_acc", "full_acc")


class IngestionError(ValueError):
    """Malformed CSV or config input; ``problems`` lists ``(line, message)`` pairs."""

    def __init__(self, path, problems: Sequence[tuple[int, str]]):
        self.path = str(path)
        self.problems = list(problems)
        shown = "; ".join(f"line {ln}: {msg}" for ln, msg in self.problems[:10])
        more = f" (+{len(self.problems) - 10} more)" if len(self.problems) > 10 else ""
        super().__init__(f"{self.path}: {shown}{more}")


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a seeded run needs. Keys of the flat config file mirror the field names."""

    seed: int
    cycles: int = 22
    population: int = 500
    tau: float = 0.5
    tau_nov: float = 0.90
    family: str = ce.FULL
    rank: int = 1
    smoothing: float = 1.0
    fit_data: str = ce.FIT_CORPUS
    fit_steps: int = 500
    fit_lr: float = 0.1
    channel: str = "off"
    eps: float = 0.005
    gamma: float = 0.3
    l_full: float = 200
    alpha: float = 0.20
    pi_full: float = 1.0
    pi_delta: float = 1.0
    landscape: str = A.MATCH
    length: int = 8
    alphabet: int = 2
    target: str = "cyclic"
    basin: float = 0.25
    penalty: float = 0.6
    static_size: int = 8
    static_match: float = 0.5
    k: int = 128
    w: int = 3
    delta: float = 0.05
    enum_cap: int = A.DEFAULT_ENUM_CAP
    label: str = "sim"

    def __post_init__(self):
        if self.cycles < 0 or self.population < 1:
            raise ValueError("cycles must be >= 0 and population >= 1")
        if self.channel not in ("off", CH_FULL, CH_DELTA):
            raise ValueError(f"channel must be off, full or delta, got {self.channel!r}")
        if self.family not in (ce.FULL, ce.RANK):
            raise ValueError(f"family must be full or rank, got {self.family!r}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        A.EliteSpec(self.tau)
        self.channel_params()
        self.target_genome()

    def channel_params(self) -> MarkovErrorParams:
        return MarkovErrorParams(self.eps, self.gamma, self.l_full, self.alpha, self.pi_full, self.pi_delta)

    def target_genome(self) -> A.Architecture:
        if self.target == "cyclic":
            return A.cyclic_target(self.length, self.alphabet)
        if self.target == "ones":
            return A.Architecture((1 % self.alphabet,) * self.length)
        tokens = tuple(int(t) for t in self.target.replace(",", " ").split())
        if len(tokens) != self.length:
            raise ValueError("target length does not match genome length")
        return A.Architecture(tokens)

    def quality(self) -> A.QualityFunction:
        return A.QualityFunction(self.target_genome(), self.alphabet, self.landscape, self.basin, self.penalty)

    def fit_config(self) -> ce.FitConfig:
        return ce.FitConfig(self.smoothing, self.fit_steps, self.fit_lr, self.fit_data)

    @property
    def enumerable(self) -> bool:
        return self.alphabet**self.length <= self.enum_cap

    @classmethod
    def from_mapping(cls, values: dict[str, str], seed: int | None = None) -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs: dict = {}
        for key, raw in values.items():
            if key not in types:
                raise KeyError(key)
            kind = types[key]
            kwargs[key] = int(raw) if kind == "int" else float(raw) if kind == "float" else raw
        if seed is not None:
            kwargs["seed"] = seed
        if "seed" not in kwargs:
            raise ValueError("a seed is required for reproducibility")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, seed: int | None = None) -> "ExperimentConfig":
        values: dict[str, str] = {}
        problems: list[tuple[int, str]] = []
        with open(path, encoding="utf-8") as fh:
            for ln, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    problems.append((ln, f"expected key = value, got {line!r}"))
                    continue
                key, val = (s.strip() for s in line.split("=", 1))
                values[key] = val
        if problems:
            raise IngestionError(path, problems)
        try:
            return cls.from_mapping(values, seed)
        except KeyError as exc:
            raise IngestionError(path, [(0, f"unknown config key {exc.args[0]!r}")]) from None
        except (TypeError, ValueError) as exc:
            raise IngestionError(path, [(0, str(exc))]) from None

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class CycleRecord:
    """One row of ``cycle_data.csv``; optional columns are ``None`` when absent or missing."""

    llm: str
    cycle: int
    valid_rate: float
    elite_concentration: float | None
    mean_quality: float | None
    admissions: int
    corpus_size: int | None = None
    n_valid: int | None = None
    elite_concentration_exact: float | None = None
    elite_concentration_se: float | None = None
    mean_quality_se: float | None = None
    extra: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class ProxyPairRecord:
    llm: str
    arch_id: str
    dataset: str
    proxy_acc: float
    full_acc: float


@dataclass
class RunReport:
    label: str
    family: str
    cycles: int
    verdicts: "OrderedDict[str, bool]" = field(default_factory=OrderedDict)
    lines: list[str] = field(default_factory=list)
    geometric: ce.GeometricReport | None = None
    plateau: tuple[float, int] | None = None
    separation: object = None
    collapse: object = None
    exact_C: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[CycleRecord]
    report: RunReport
    corpus: ce.CorpusState
    final: ce.GenDistribution


# ---------------------------------------------------------------- diagnostics


def smoothed_quality(trajectory: Sequence[float], window: int = 3) -> np.ndarray:
    """Centered moving average; edge cycles average over the part of the window that exists."""
    q = np.asarray(trajectory, dtype=float)
    if q.size == 0:
        raise ValueError("empty trajectory")
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    h = window // 2
    return np.array([q[max(0, t - h) : t + h + 1].mean() for t in range(q.size)])


def _smoothed_se(se: Sequence[float], window: int = 3) -> np.ndarray:
    se = np.asarray(se, dtype=float)
    h = window // 2
    return np.array([math.sqrt((se[max(0, t - h) : t + h + 1] ** 2).sum()) / se[max(0, t - h) : t + h + 1].size
                     for t in range(se.size)])


def plateau_detect(trajectory: Sequence[float], window: int = 5, band: float = 0.03) -> tuple[float, int] | None:
    """``(level, start)`` when the last ``window`` values span at most ``band``, else ``None``.

    ``level`` is the mean of those values; ``start`` walks back over earlier
    cycles for as long as the run still fits in the band.
    """
    c = np.asarray(trajectory, dtype=float)
    if c.size < window:
        raise ValueError("trajectory shorter than the plateau window")
    tail = c[-window:]
    if np.ptp(tail) > band + 1e-12:
        return None
    start = c.size - window
    lo, hi = tail.min(), tail.max()
    while start > 0:
        nlo, nhi = min(lo, c[start - 1]), max(hi, c[start - 1])
        if nhi - nlo > band + 1e-12:
            break
        lo, hi, start = nlo, nhi, start - 1
    return float(tail.mean()), int(start)


def smoothed_monotone(Q: Sequence[float], se: Sequence[float], window: int = 3) -> tuple[bool, list[int]]:
    """Whether the smoothed trajectory never drops by more than 3 standard errors."""
    Q, se = np.asarray(Q, float), np.asarray(se, float)
    ok = np.isfinite(Q)
    Q, se = Q[ok], np.nan_to_num(se[ok])
    if Q.size < 2:
        return True, []
    s, s_se = smoothed_quality(Q, window), _smoothed_se(se, window)
    drops = [t for t in range(s.size - 1) if s[t + 1] < s[t] - 3.0 * max(s_se[t], s_se[t + 1]) - 1e-12]
    return not drops, drops


def _float(x) -> float:
    return float("nan") if x is None else float(x)


def trajectory_verdicts(records: Sequence[CycleRecord], delta: float = 0.05) -> tuple["OrderedDict[str, bool]", list[str], ce.GeometricReport | None]:
    """Verdicts computable from a trajectory alone; identical in-run and from a re-ingested CSV."""
    verdicts: OrderedDict[str, bool] = OrderedDict()
    lines: list[str] = []
    if not records:
        return verdicts, ["no cycles"], None
    recs = sorted(records, key=lambda r: r.cycle)
    C = [_float(r.elite_concentration) for r in recs]
    C_se = [_float(r.elite_concentration_se) if r.elite_concentration_se is not None else 0.0 for r in recs]
    Q = [_float(r.mean_quality) for r in recs]
    Q_se = [_float(r.mean_quality_se) if r.mean_quality_se is not None else 0.0 for r in recs]

    geo = ce.geometric_rate_check(C, C_se, delta=delta)
    if geo.applicable:
        bad = [t for t, f in enumerate(geo.flags) if f is False]
        verdicts["geometric_rate"] = geo.passed
        lines.append(
            f"geometric rate: rho0={geo.rho0:.6g} t*={geo.t_star} checked={geo.n_checked} "
            f"violations={bad if bad else 'none'}"
        )
    else:
        lines.append(f"geometric rate: not applicable ({geo.note})")

    mono, drops = smoothed_monotone(Q, Q_se)
    verdicts["smoothed_quality_monotone"] = mono
    lines.append(f"3-cycle smoothed Q monotone within 3 SE: {'yes' if mono else 'no'} drops at {drops or 'none'}")

    zero = [r.cycle for r in recs if r.admissions < 1]
    verdicts["admissions_every_cycle"] = not zero
    lines.append(f"admissions >= 1 every cycle: {'yes' if not zero else 'no'} (zero at cycles {zero or 'none'})")

    sizes = [r.corpus_size for r in recs if r.corpus_size is not None]
    if sizes:
        verdicts["corpus_monotone"] = all(b >= a for a, b in zip(sizes, sizes[1:]))
        lines.append(f"corpus monotone: {'yes' if verdicts['corpus_monotone'] else 'no'} final size {sizes[-1]}")
    return verdicts, lines, geo


def _plateau_series(records: Sequence[CycleRecord]) -> list[float]:
    if records and all(r.elite_concentration_exact is not None for r in records):
        return [r.elite_concentration_exact for r in records]
    return [_float(r.elite_concentration) for r in records]


# ---------------------------------------------------------------- experiment


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run ``cfg.cycles`` cycles and collect per-cycle records plus the final verdicts."""
    rng = np.random.default_rng(cfg.seed)
    q = cfg.quality()
    spec = A.EliteSpec(cfg.tau)
    static = A.medium_corpus(q, cfg.static_size, cfg.static_match, seed=cfg.seed)
    state = ce.CorpusState.start(static)
    nov = NoveltyFilter(cfg.tau_nov, cfg.k, cfg.w, seed=cfg.seed)
    nov.preload(static)
    channel = None if cfg.channel == "off" else (cfg.channel_params(), cfg.channel)
    d = ce.GenDistribution.uniform(cfg.length, cfg.alphabet, cfg.family, cfg.rank)
    fit = cfg.fit_config()

    records: list[CycleRecord] = []
    exact: list[float] = []
    last = None
    for t in range(cfg.cycles):
        c_exact = ce.elite_concentration(d, q, spec, cap=cfg.enum_cap).value if cfg.enumerable else None
        try:
            state, d, out = ce.run_cycle(state, d, q, spec, nov, channel, cfg.population, rng, fit)
        except Exception as exc:
            raise RuntimeError(f"cycle {t}: {exc}") from exc
        missing = out.valid == 0
        records.append(
            CycleRecord(
                cfg.label,
                t,
                out.valid_rate,
                None if missing else out.C,
                None if missing else out.Q,
                out.admitted,
                len(state),
                out.valid,
                c_exact,
                None if missing else out.C_se,
                None if missing else out.Q_se,
            )
        )
        if c_exact is not None:
            exact.append(c_exact)
        if out.fitted:
            last = out

    report = RunReport(cfg.label, cfg.family, cfg.cycles, exact_C=exact)
    if not records:
        report.lines.append("no cycles")
        return ExperimentResult(cfg, records, report, state, d)

    verdicts, lines, geo = trajectory_verdicts(records, cfg.delta)
    report.verdicts.update(verdicts)
    report.lines.extend(lines)
    report.geometric = geo

    series = _plateau_series(records)
    if len(series) >= 5:
        report.plateau = plateau_detect(series)
        src = "exact" if records[0].elite_concentration_exact is not None else "sampled"
        if report.plateau:
            report.lines.append(
                f"plateau ({src} C): level {report.plateau[0]:.4f} from cycle {report.plateau[1]}; max C {max(series):.4f}"
            )
        else:
            report.lines.append(f"plateau ({src} C): none in the last 5 cycles; max C {max(series):.4f}")

    sets = [shingles(g, cfg.w) for g in state.members + state.static]
    sep = separation_check(sets, cfg.tau_nov, k=cfg.k)
    report.separation = sep
    report.verdicts["separation"] = sep.passed
    report.lines.append(
        f"separation: {sep.n_members} members, min exact d_J {sep.min_distance:.4f}, "
        f"required {sep.required:.4f} - slack {sep.slack:.4f}, violations {len(sep.violations)}"
    )

    fit_corpus = len(state) + len(state.static)
    if last is not None and fit_corpus >= 2:
        diag = collapse_diagnostics(d, fit_corpus, max(0.0, last.k_star))
        report.collapse = diag
        if diag.informative:
            report.verdicts["no_collapse"] = not diag.collapsed
        report.lines.append(
            f"collapse: K*={diag.k_star:.4g} |S|={fit_corpus} delta={diag.delta:.4g} "
            f"{'' if diag.informative else '(bound not informative) '}"
            f"H_bin={diag.entropy_bound:.4g} max p={diag.max_prob:.4g} entropy={diag.entropy:.4g}"
        )
    vr = np.mean([r.valid_rate for r in records])
    report.lines.append(f"mean valid rate: {vr:.6f} (channel {cfg.channel})")
    return ExperimentResult(cfg, records, report, state, d)


def run_paired_channels(cfg: ExperimentConfig) -> tuple[ExperimentResult, ExperimentResult, float]:
    """Run the same seeded config through the full and the delta channel; return both and the valid-rate ratio."""
    full = run_experiment(replace(cfg, channel=CH_FULL, label=f"{cfg.label}-full"))
    delta = run_experiment(replace(cfg, channel=CH_DELTA, label=f"{cfg.label}-delta"))
    rf = np.mean([r.valid_rate for r in full.records])
    rd = np.mean([r.valid_rate for r in delta.records])
    return full, delta, float(rd / rf)


# ---------------------------------------------------------------- CSV I/O


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_cycle_csv(records: Sequence[CycleRecord], path) -> None:
    extra_keys: list[str] = []
    for r in records:
        for k, _ in r.extra:
            if k not in extra_keys:
                extra_keys.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CYCLE_COLUMNS + CYCLE_EXTRA + tuple(extra_keys))
        for r in records:
            ex = dict(r.extra)
            w.writerow(
                [_fmt(getattr(r, c)) for c in CYCLE_COLUMNS + CYCLE_EXTRA] + [ex.get(k, "") for k in extra_keys]
            )


def write_proxy_csv(records: Sequence[ProxyPairRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROXY_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in PROXY_COLUMNS])


def _read_rows(path, required: Sequence[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(path, [(1, "empty file")]) from None
        missing = [c for c in required if c not in header]
        if missing:
            raise IngestionError(path, [(1, f"missing column(s) {', '.join(missing)}")])
        rows = [(ln, row) for ln, row in enumerate(reader, 2) if any(cell.strip() for cell in row)]
    return header, rows


def _num(cell: str, name: str, kind=float, lo=None, hi=None, optional=False):
    cell = cell.strip()
    if cell == "" or cell.lower() == "nan":
        if optional:
            return None
        raise ValueError(f"{name} is empty")
    try:
        v = kind(cell)
    except ValueError:
        raise ValueError(f"{name}={cell!r} is not numeric") from None
    if kind is float and not math.isfinite(v):
        raise ValueError(f"{name}={cell!r} is not finite")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ValueError(f"{name}={cell} outside [{lo}, {hi}]")
    return v


def ingest_cycle_csv(path) -> list[CycleRecord]:
    """Read a cycle trajectory file; unknown trailing columns are preserved in ``extra``."""
    header, rows = _read_rows(path, CYCLE_COLUMNS)
    known = set(CYCLE_COLUMNS + CYCLE_EXTRA)
    out, problems = [], []
    for ln, row in rows:
        if len(row) != len(header):
            problems.append((ln, f"expected {len(header)} fields, got {len(row)}"))
            continue
        cell = dict(zip(header, row))
        try:
            has = lambda c: c in cell and cell[c].strip() != ""
            rec = CycleRecord(
                llm=cell["llm"].strip(),
                cycle=_num(cell["cycle"], "cycle", int, 0),
                valid_rate=_num(cell["valid_rate"], "valid_rate", float, 0.0, 1.0),
                elite_concentration=_num(cell["elite_concentration"], "elite_concentration", float, 0.0, 1.0, True),
                mean_quality=_num(cell["mean_quality"], "mean_quality", float, 0.0, 1.0, True),
                admissions=_num(cell["admissions"], "admissions", int, 0),
                corpus_size=_num(cell["corpus_size"], "corpus_size", int, 0) if has("corpus_size") else None,
                n_valid=_num(cell["n_valid"], "n_valid", int, 0) if has("n_valid") else None,
                elite_concentration_exact=_num(cell.get("elite_concentration_exact", ""), "elite_concentration_exact", float, 0.0, 1.0, True),
                elite_concentration_se=_num(cell.get("elite_concentration_se", ""), "elite_concentration_se", float, 0.0, None, True),
                mean_quality_se=_num(cell.get("mean_quality_se", ""), "mean_quality_se", float, 0.0, None, True),
                extra=tuple((h, cell[h]) for h in header if h not in known),
            )
            if not rec.llm:
                raise ValueError("llm label is empty")
            if rec.n_valid is not None and rec.admissions > rec.n_valid:
                raise ValueError("admissions exceed the valid count")
        except ValueError as exc:
            problems.append((ln, str(exc)))
            continue
        out.append(rec)
    if problems:
        raise IngestionError(path, problems)
    return out


def ingest_proxy_csv(path) -> list[ProxyPairRecord]:
    header, rows = _read_rows(path, PROXY_COLUMNS)
    out, problems = [], []
    for ln, row in rows:
        if len(row) != len(header):
            problems.append((ln, f"expected {len(header)} fields, got {len(row)}"))
            continue
        cell = dict(zip(header, row))
        try:
            rec = ProxyPairRecord(
                cell["llm"].strip(),
                cell["arch_id"].strip(),
                cell["dataset"].strip(),
                _num(cell["proxy_acc"], "proxy_acc", float, 0.0, 1.0),
                _num(cell["full_acc"], "full_acc", float, 0.0, 1.0),
            )
            if not rec.llm:
                raise ValueError("llm label is empty")
        except ValueError as exc:
            problems.append((ln, str(exc)))
            continue
        out.append(rec)
    if problems:
        raise IngestionError(path, problems)
    return out


# ---------------------------------------------------------------- proxy analysis


@dataclass(frozen=True)
class ProxyRow:
    llm: str
    n: int
    snr: ps.SnrReport
    corr: ps.CorrelationReport


@dataclass(frozen=True)
class ProxyAnalysis:
    rows: tuple[ProxyRow, ...]
    skipped: tuple[tuple[str, str], ...]
    by_snr: tuple[str, ...]
    by_spearman: tuple[str, ...]

    @property
    def orderings_agree(self) -> bool:
        return self.by_snr == self.by_spearman


def analyze_proxy_csv(records: Iterable[ProxyPairRecord]) -> ProxyAnalysis:
    """Table-1 style analysis: one row per generator label, Bonferroni over the analysed groups."""
    groups: OrderedDict[str, list[ProxyPairRecord]] = OrderedDict()
    for r in records:
        groups.setdefault(r.llm, []).append(r)
    samples, skipped = [], []
    for label, recs in groups.items():
        if len(recs) < 3:
            warnings.warn(f"group {label!r} has {len(recs)} pairs; skipped", RuntimeWarning, stacklevel=2)
            skipped.append((label, f"only {len(recs)} pairs"))
            continue
        s = ps.PairedSample([r.full_acc for r in recs], [r.proxy_acc for r in recs], label,
                            tuple(r.dataset for r in recs))
        try:
            ps.spearman(s)
        except ps.DegenerateSampleError as exc:
            warnings.warn(f"group {label!r}: {exc}; skipped", RuntimeWarning, stacklevel=2)
            skipped.append((label, str(exc)))
            continue
        samples.append(s)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for s in samples:
            rows.append(ProxyRow(s.group, s.n, ps.snr(s), ps.correlation_report(s, multiplier=len(samples))))
    by_snr = tuple(r.llm for r in sorted(rows, key=lambda r: -r.snr.snr))
    by_rho = tuple(r.llm for r in sorted(rows, key=lambda r: -r.corr.spearman))
    return ProxyAnalysis(tuple(rows), tuple(skipped), by_snr, by_rho)


def synthetic_proxy_records(
    snrs: Sequence[float], sizes: Sequence[int], labels: Sequence[str], rng, mean: float = 0.70, scale: float = 0.05
) -> list[ProxyPairRecord]:
    """Bivariate-Normal pairs mapped to accuracies ``mean + scale * z`` (clipped to ``[0, 1]``)."""
    rng = np.random.default_rng(rng)
    out = []
    for snr_value, n, label in zip(snrs, sizes, labels):
        s = ps.sample_bivariate(snr_value, n, rng)
        full = np.clip(mean + scale * s.full, 0.0, 1.0)
        proxy = np.clip(mean + scale * s.proxy, 0.0, 1.0)
        for i in range(n):
            out.append(ProxyPairRecord(label, f"{label}-{i:03d}", "synthetic", float(proxy[i]), float(full[i])))
    return out


# ---------------------------------------------------------------- reports


def _fmt_p(p: float) -> str:
    return f"{p:.3g}"


def proxy_table_lines(analysis: ProxyAnalysis) -> list[str]:
    lines = [f"{'llm':<16}{'n':>4}{'SNR':>10}{'rho_S':>9}{'p':>11}{'p_bonf':>11}{'pearson':>9}{'kendall':>9}{'rho_S pred':>11}"]
    for r in analysis.rows:
        snr_v = r.snr.snr
        pred = "inf" if math.isinf(snr_v) else (f"{ps.rho_s_closed_form(snr_v):.3f}" if snr_v > 0 else "0")
        snr_s = "inf" if math.isinf(snr_v) else f"{snr_v:.4g}"
        lines.append(
            f"{r.llm:<16}{r.n:>4}{snr_s:>10}{r.corr.spearman:>9.3f}{_fmt_p(r.corr.p):>11}"
            f"{_fmt_p(r.corr.p_bonf):>11}{r.corr.pearson:>9.3f}{r.corr.kendall:>9.3f}{pred:>11}"
        )
    lines.append(f"order by SNR: {', '.join(analysis.by_snr)}")
    lines.append(f"order by Spearman: {', '.join(analysis.by_spearman)}")
    for label, why in analysis.skipped:
        lines.append(f"skipped {label}: {why}")
    return lines


def report_text(reports: Sequence[RunReport], analyses: Sequence[ProxyAnalysis] = (), timestamp: str | None = None) -> str:
    """Plain-text report. Only the first line carries a timestamp; the body is deterministic."""
    ts = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    out = io.StringIO()
    out.write(f"generated {ts}\n")
    out.write(report_body(reports, analyses))
    return out.getvalue()


def report_body(reports: Sequence[RunReport], analyses: Sequence[ProxyAnalysis] = ()) -> str:
    out = io.StringIO()
    if not reports and not analyses:
        out.write("no cycles\n")
    for rep in reports:
        out.write(f"\n[{rep.label}] family={rep.family} cycles={rep.cycles}\n")
        for line in rep.lines:
            out.write(f"  {line}\n")
        for name, ok in rep.verdicts.items():
            out.write(f"  verdict {name}: {'PASS' if ok else 'FAIL'}\n")
        out.write(f"  overall: {'PASS' if rep.passed else 'FAIL'}\n")
    for i, an in enumerate(analyses):
        out.write(f"\n[proxy analysis {i}]\n")
        for line in proxy_table_lines(an):
            out.write(f"  {line}\n")
    return out.getvalue()


def emit_report(
    records: Sequence[CycleRecord],
    analyses: Sequence[ProxyAnalysis],
    path,
    reports: Sequence[RunReport] = (),
    timestamp: str | None = None,
) -> dict[str, Path]:
    """Write the trajectory CSV, the text report and per-figure CSVs into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "cycles": out / "cycle_data.csv",
        "report": out / "report.txt",
        "fig_concentration": out / "fig1a_elite_concentration.csv",
        "fig_quality": out / "fig1b_mean_quality.csv",
    }
    write_cycle_csv(records, files["cycles"])

    bounds: dict[str, tuple] = {r.label: r.geometric.bounds if r.geometric else () for r in reports}
    with open(files["fig_concentration"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["llm", "cycle", "C", "C_se", "C_exact", "geometric_bound"])
        for r in records:
            b = bounds.get(r.llm, ())
            w.writerow([r.llm, r.cycle, _fmt(r.elite_concentration), _fmt(r.elite_concentration_se),
                        _fmt(r.elite_concentration_exact), _fmt(float(b[r.cycle])) if r.cycle < len(b) else ""])

    by_llm: OrderedDict[str, list[CycleRecord]] = OrderedDict()
    for r in records:
        by_llm.setdefault(r.llm, []).append(r)
    with open(files["fig_quality"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["llm", "cycle", "Q", "Q_smoothed"])
        for llm, recs in by_llm.items():
            ok = [r for r in recs if r.mean_quality is not None]
            sm = smoothed_quality([r.mean_quality for r in ok]) if ok else []
            for r, s in zip(ok, sm):
                w.writerow([llm, r.cycle, _fmt(r.mean_quality), _fmt(float(s))])

    for i, an in enumerate(analyses):
        key = "table1" if i == 0 else f"table1_{i}"
        files[key] = out / f"{key}.csv"
        with open(files[key], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["llm", "n", "sigma2_arch", "sigma2_noise", "snr", "spearman", "p_raw", "p_bonf",
                        "pearson", "kendall", "spearman_predicted"])
            for r in an.rows:
                pred = ps.rho_s_closed_form(r.snr.snr) if r.snr.snr > 0 else 0.0
                w.writerow([r.llm, r.n, _fmt(r.snr.sigma2_arch), _fmt(r.snr.sigma2_noise), _fmt(r.snr.snr),
                            _fmt(r.corr.spearman), _fmt(r.corr.p), _fmt(r.corr.p_bonf), _fmt(r.corr.pearson),
                            _fmt(r.corr.kendall), _fmt(pred)])

    with open(files["report"], "w", encoding="utf-8") as fh:
        fh.write(report_text(reports, analyses, timestamp))
    return files


def check_cycle_records(records: Sequence[CycleRecord], delta: float = 0.05) -> list[RunReport]:
    """Recompute trajectory verdicts per generator label."""
    by_llm: OrderedDict[str, list[CycleRecord]] = OrderedDict()
    for r in records:
        by_llm.setdefault(r.llm, []).append(r)
    reports = []
    for llm, recs in by_llm.items():
        v, lines, geo = trajectory_verdicts(recs, delta)
        reports.append(RunReport(llm, "from-csv", len(recs), v, lines, geo))
    return reports


__all__ = [
    "CycleRecord",
    "ExperimentConfig",
    "ExperimentResult",
    "IngestionError",
    "ProxyAnalysis",
    "ProxyPairRecord",
    "RunReport",
    "analyze_proxy_csv",
    "check_cycle_records",
    "emit_report",
    "ingest_cycle_csv",
    "ingest_proxy_csv",
    "plateau_detect",
    "report_body",
    "run_experiment",
    "run_paired_channels",
    "smoothed_quality",
    "synthetic_proxy_records",
    "trajectory_verdicts",
    "write_cycle_csv",
    "write_proxy_csv",
]
