"""Compose loss analytics, simulation and the E-model into report rows."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .analytics import CodeParams, LossModel, ResidualLossStats, burst_ratio
from .channel import SimConfig, simulate_stream
from .emodel import CodecProfile, EModelParams, coding_delay, find_profile, transmission_rating
from .emulator import EmulationConfig, run_emulation

METHODS = ("analytic", "simulate", "emulate")

CSV_COLUMNS = (
    "codec", "p", "N", "K", "coding", "method", "estimator",
    "Ppl_percent", "BurstR", "T_ms", "Ie_eff", "Id", "R", "MOS", "error",
)


@dataclass(frozen=True)
class CodePoint:
    """A code choice for a sweep; ``code=None`` means no erasure coding at all."""

    code: CodeParams | None

    @classmethod
    def parse(cls, text: str) -> "CodePoint":
        text = text.strip().lower()
        if text in ("none", "no-coding", "off", "-"):
            return cls(None)
        try:
            n, k = text.replace("/", ":").replace(",", ":").split(":")
            return cls(CodeParams(int(n), int(k)))
        except ValueError:
            raise ValueError(f"bad code point {text!r}; use N:K or 'none'") from None

    @property
    def coding(self) -> bool:
        return self.code is not None

    @property
    def label(self) -> str:
        return "none" if self.code is None else f"{self.code.n_block}:{self.code.k_redundancy}"


@dataclass(frozen=True)
class SweepSpec:
    p_values: tuple[float, ...]
    code_points: tuple[CodePoint, ...]
    codecs: tuple[CodecProfile, ...]
    method: str = "analytic"
    estimator: str = "cluster"
    tolerance: float = 1e-6
    num_blocks: int = 100_000
    seed: int = 0
    payload_bytes: int = 32

    def __post_init__(self):
        if not self.p_values:
            raise ValueError("sweep needs at least one loss probability")
        if not self.code_points:
            raise ValueError("sweep needs at least one code point")
        if not self.codecs:
            raise ValueError("sweep needs at least one codec")
        for p in self.p_values:
            LossModel(p)
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")

    def cells(self):
        for codec in self.codecs:
            for point in self.code_points:
                for p in self.p_values:
                    yield codec, point, p


@dataclass(frozen=True)
class ReportRow:
    codec: str
    p: float
    n: int
    k: int
    coding: bool
    method: str
    estimator: str
    ppl_percent: float
    burst_ratio: float | None
    t_ms: float
    ie_eff: float
    id: float
    r: float
    mos: float
    error: float
    components: dict = field(default_factory=dict)

    def csv_record(self) -> dict:
        return {
            "codec": self.codec,
            "p": repr(self.p),
            "N": self.n,
            "K": self.k,
            "coding": int(self.coding),
            "method": self.method,
            "estimator": self.estimator,
            "Ppl_percent": repr(self.ppl_percent),
            "BurstR": "-" if self.burst_ratio is None else repr(self.burst_ratio),
            "T_ms": repr(self.t_ms),
            "Ie_eff": repr(self.ie_eff),
            "Id": repr(self.id),
            "R": repr(self.r),
            "MOS": repr(self.mos),
            "error": repr(self.error),
        }

    def json_record(self) -> dict:
        out = asdict(self)
        out["burst_ratio"] = "-" if self.burst_ratio is None else self.burst_ratio
        return out

    def display(self) -> dict:
        """Rounded for reading: one decimal for Ppl, BurstR and MOS."""
        return {
            "codec": self.codec,
            "p%": f"{100 * self.p:.1f}",
            "N": str(self.n) if self.coding else "-",
            "K": str(self.k) if self.coding else "-",
            "Ppl%": f"{self.ppl_percent:.1f}",
            "BurstR": "-" if self.burst_ratio is None else f"{self.burst_ratio:.1f}",
            "T": f"{self.t_ms:g}",
            "Ie-eff": f"{self.ie_eff:.2f}",
            "Id": f"{self.id:.2f}",
            "R": f"{self.r:.2f}",
            "MOS": f"{self.mos:.1f}",
        }


def loss_stats(point: CodePoint, p: float, method: str = "analytic", estimator: str = "cluster", tolerance: float = 1e-6,
               num_blocks: int = 100_000, seed: int = 0, interval_ms: float = 20.0, payload_bytes: int = 32) -> ResidualLossStats:
    """Residual loss statistics for one cell; no coding passes the channel through."""
    loss = LossModel(p)
    if point.code is None:
        return ResidualLossStats(p, 1.0 / (1.0 - p) if p > 0 else None, 1.0 if p > 0 else None, 0.0, estimator)
    if method == "analytic":
        return burst_ratio(point.code, loss, tolerance, estimator)
    if method == "simulate":
        return simulate_stream(SimConfig(point.code, loss, num_blocks, seed)).stats_for(estimator)
    if method == "emulate":
        rep = run_emulation(EmulationConfig(point.code, loss, interval_ms, payload_bytes, num_blocks, seed))
        mean, _ = rep.estimates.mean(estimator)
        br, se = rep.estimates.burst_ratio(estimator)
        return ResidualLossStats(rep.estimates.ppl, mean, br, se if br is not None else 0.0, estimator)
    raise ValueError(f"unknown method {method!r}")


def evaluate(codec: CodecProfile, point: CodePoint, p: float, method: str = "analytic", estimator: str = "cluster",
             tolerance: float = 1e-6, num_blocks: int = 100_000, seed: int = 0, payload_bytes: int = 32,
             params: EModelParams | None = None) -> ReportRow:
    """Full pipeline for one cell: loss statistics, delay budget, E-model."""
    params = params or EModelParams()
    stats = loss_stats(point, p, method, estimator, tolerance, num_blocks, seed, codec.packet_interval_ms, payload_bytes)
    t_ms = coding_delay(point.code, codec) if point.coding else 0.0
    # sampled burst ratios can dip just under 1; the E-model domain starts at 1
    burst = max(1.0, stats.burst_ratio_or_one())
    rep = transmission_rating(params.with_one_way_delay(t_ms), codec, stats.ppl_percent, burst)
    return ReportRow(
        codec=codec.name,
        p=p,
        n=point.code.n_block if point.coding else 1,
        k=point.code.k_redundancy if point.coding else 0,
        coding=point.coding,
        method=method,
        estimator=estimator,
        ppl_percent=stats.ppl_percent,
        burst_ratio=stats.burst_ratio,
        t_ms=t_ms,
        ie_eff=rep.ie_eff,
        id=rep.id,
        r=rep.r_factor,
        mos=rep.mos_cq,
        error=stats.truncation_error_bound,
        components={
            "ro": rep.ro, "is": rep.is_, "idte": rep.idte, "idle": rep.idle, "idd": rep.idd,
            "advantage": rep.advantage, "expected_run_length": stats.expected_run_length,
        },
    )


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[ReportRow]:
    """Evaluate every (codec, code point, p) cell; output order follows the spec."""

    def cell(args):
        codec, point, p = args
        return evaluate(codec, point, p, spec.method, spec.estimator, spec.tolerance, spec.num_blocks, spec.seed,
                        spec.payload_bytes)

    cells = list(spec.cells())
    if jobs <= 1:
        return [cell(c) for c in cells]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(cell, cells))


@dataclass(frozen=True)
class ValidationCell:
    n: int
    k: int
    p: float
    estimator: str
    ppl_eq: float
    ppl_sim: float
    ppl_se: float
    br_eq: float | None
    br_sim: float | None
    br_se: float
    sigma: float

    @staticmethod
    def _z(a, b, se) -> float:
        if a is None and b is None:
            return 0.0
        if a is None or b is None:
            return math.inf
        if se == 0.0:
            return 0.0 if a == b else math.inf
        return abs(a - b) / se

    @property
    def z_ppl(self) -> float:
        return self._z(self.ppl_eq, self.ppl_sim, self.ppl_se)

    @property
    def z_br(self) -> float:
        return self._z(self.br_eq, self.br_sim, self.br_se)

    @property
    def passed(self) -> bool:
        return self.z_ppl <= self.sigma and self.z_br <= self.sigma

    def record(self) -> dict:
        fmt = lambda v: "-" if v is None else v  # noqa: E731
        return {
            "N": self.n, "K": self.k, "p": self.p, "estimator": self.estimator,
            "Ppl_eq": 100 * self.ppl_eq, "Ppl_sim": 100 * self.ppl_sim, "Ppl_se": 100 * self.ppl_se, "z_Ppl": self.z_ppl,
            "BurstR_eq": fmt(self.br_eq), "BurstR_sim": fmt(self.br_sim), "BurstR_se": self.br_se, "z_BurstR": self.z_br,
            "pass": self.passed,
        }


def validate_grid(codes: list[CodeParams], p_values: list[float], num_blocks: int = 1_000_000, seed: int = 0,
                  tolerance: float = 1e-6, estimators=("cluster", "pooled"), sigma: float = 4.0) -> list[ValidationCell]:
    """Analytic values against Monte Carlo estimates, one cell per (code, p, estimator).

    The analytic truncation bound is added in quadrature to the standard error.
    """
    out = []
    for code in codes:
        for i, p in enumerate(p_values):
            sim = simulate_stream(SimConfig(code, LossModel(p), num_blocks, seed + i))
            est = sim.estimates
            for estimator in estimators:
                eq = burst_ratio(code, LossModel(p), tolerance, estimator)
                br_sim, br_se = est.burst_ratio(estimator)
                out.append(ValidationCell(
                    code.n_block, code.k_redundancy, p, estimator,
                    eq.ppl_fraction, est.ppl, est.ppl_se,
                    eq.burst_ratio, br_sim, math.hypot(br_se, eq.truncation_error_bound), sigma,
                ))
    return out


PRESETS = {
    "loss-grid": {"codecs": ["g711-plc"], "points": ["10:3", "5:2"], "p": [0.0, 0.05, 0.10, 0.12, 0.15]},
    "codec-compare": {"codecs": ["g729a-vad", "g723.1-vad"], "points": ["none", "5:2"], "p": [0.10]},
    "mos-curve": {"codecs": ["g711-plc"], "points": ["none", "10:3", "5:2"], "p": [round(0.01 * i, 2) for i in range(16)]},
}


def preset_spec(name: str, **overrides) -> SweepSpec:
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return SweepSpec(
        p_values=tuple(preset["p"]),
        code_points=tuple(CodePoint.parse(t) for t in preset["points"]),
        codecs=tuple(find_profile(c) for c in preset["codecs"]),
        **overrides,
    )


def write_csv(rows: list[ReportRow], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.csv_record())
    return path


def rows_document(rows: list[ReportRow], meta: dict | None = None) -> dict:
    return {"meta": meta or {}, "rows": [r.json_record() for r in rows]}


def write_json(rows: list[ReportRow], path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(rows_document(rows, meta), indent=2, sort_keys=True) + "\n")
    return path


def report_schema() -> dict:
    return json.loads(resources.files("blockfec").joinpath("schemas/report.schema.json").read_text())
