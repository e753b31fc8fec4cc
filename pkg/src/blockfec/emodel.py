"""ITU-T G.107 E-model (narrowband) for conversation-quality MOS.

Only the pieces needed to turn residual loss, burstiness and one-way delay
into a rating are exposed.  All parameter defaults are the G.107 reference
values, for which R is 93.2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .analytics import CodeParams

IE_CEILING = 95.0


@dataclass(frozen=True)
class CodecProfile:
    name: str
    ie: float
    bpl: float
    packet_interval_ms: float

    def __post_init__(self):
        if not self.name:
            raise ValueError("codec profile needs a name")
        if not self.ie >= 0:
            raise ValueError(f"{self.name}: Ie must be >= 0, got {self.ie}")
        if not self.bpl > 0:
            raise ValueError(f"{self.name}: Bpl must be > 0, got {self.bpl}")
        if not self.packet_interval_ms > 0:
            raise ValueError(f"{self.name}: packet interval must be > 0, got {self.packet_interval_ms}")


BUILTIN_PROFILES = (
    CodecProfile("g711-plc", ie=0.0, bpl=25.1, packet_interval_ms=20.0),
    CodecProfile("g729a-vad", ie=11.0, bpl=19.0, packet_interval_ms=20.0),
    CodecProfile("g723.1-vad", ie=15.0, bpl=16.1, packet_interval_ms=30.0),
)

_ALIASES = {
    "g711": "g711-plc",
    "g729": "g729a-vad",
    "g729a": "g729a-vad",
    "g723": "g723.1-vad",
    "g723.1": "g723.1-vad",
}


def builtin_codec_profiles() -> list[CodecProfile]:
    return list(BUILTIN_PROFILES)


def load_codec_profiles(path) -> list[CodecProfile]:
    """Read profiles from JSON: a list of records or ``{"profiles": [...]}``."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("profiles", [data])
    return [
        CodecProfile(str(r["name"]), float(r["ie"]), float(r["bpl"]), float(r["packet_interval_ms"]))
        for r in data
    ]


def find_profile(name: str, extra: list[CodecProfile] | None = None) -> CodecProfile:
    table = {p.name.lower(): p for p in BUILTIN_PROFILES}
    table.update({p.name.lower(): p for p in extra or ()})
    key = name.lower()
    key = key if key in table else _ALIASES.get(key, key)
    try:
        return table[key]
    except KeyError:
        raise KeyError(f"unknown codec {name!r}; known: {', '.join(sorted(table))}") from None


@dataclass(frozen=True)
class EModelParams:
    """G.107 input parameters (default reference connection)."""

    slr: float = 8.0
    rlr: float = 2.0
    stmr: float = 15.0
    lstr: float = 18.0
    ds: float = 3.0
    dr: float = 3.0
    telr: float = 65.0
    wepl: float = 110.0
    qdu: float = 1.0
    nc: float = -70.0
    nfor: float = -64.0
    ps: float = 35.0
    pr: float = 35.0
    advantage: float = 0.0
    s_t: float = 1.0
    m_t: float = 100.0
    t: float = 0.0
    ta: float = 0.0
    tr: float = 0.0

    def __post_init__(self):
        if self.t < 0 or self.ta < 0 or self.tr < 0:
            raise ValueError("delays must be non-negative")
        if self.qdu < 1:
            raise ValueError("qdu must be >= 1")

    @property
    def olr(self) -> float:
        return self.slr + self.rlr

    def with_one_way_delay(self, t_ms: float) -> "EModelParams":
        """Mouth-to-ear delay ``t_ms`` used for T and Ta, with round trip Tr = 2T."""
        return replace(self, t=t_ms, ta=t_ms, tr=2.0 * t_ms)


@dataclass(frozen=True)
class DelayImpairment:
    id: float
    idte: float
    idle: float
    idd: float


@dataclass(frozen=True)
class MosReport:
    r_factor: float
    mos_cq: float
    ro: float
    is_: float
    id: float
    idte: float
    idle: float
    idd: float
    ie_eff: float
    advantage: float = 0.0
    extras: dict = field(default_factory=dict)

    def component_sum(self) -> float:
        return self.ro - self.is_ - self.id - self.ie_eff + self.advantage


def _lg(x: float) -> float:
    return math.log10(x)


def noise_terms(params: EModelParams) -> dict[str, float]:
    """No (total noise), Ro and the intermediate noise powers in dBm0p."""
    p = params
    nos = p.ps - p.slr - p.ds - 100.0 + 0.004 * (p.ps - p.olr - p.ds - 14.0) ** 2
    pre = p.pr + 10.0 * _lg(1.0 + 10.0 ** ((10.0 - p.lstr) / 10.0))
    nor = p.rlr - 121.0 + pre + 0.008 * (pre - 35.0) ** 2
    nfo = p.nfor + p.rlr
    no = 10.0 * _lg(10.0 ** (p.nc / 10.0) + 10.0 ** (nos / 10.0) + 10.0 ** (nor / 10.0) + 10.0 ** (nfo / 10.0))
    ro = 15.0 - 1.5 * (p.slr + no)
    return {"nos": nos, "pre": pre, "nor": nor, "nfo": nfo, "no": no, "ro": ro}


def _ist(params: EModelParams) -> float:
    stmro = -10.0 * _lg(10.0 ** (-params.stmr / 10.0) + math.exp(-params.t / 4.0) * 10.0 ** (-params.telr / 10.0))
    return (
        12.0 * (1.0 + ((stmro - 13.0) / 6.0) ** 8) ** (1.0 / 8.0)
        - 28.0 * (1.0 + ((stmro + 1.0) / 19.4) ** 35) ** (1.0 / 35.0)
        - 13.0 * (1.0 + ((stmro - 3.0) / 33.0) ** 13) ** (1.0 / 13.0)
        + 29.0
    )


def simultaneous_impairment(params: EModelParams) -> tuple[float, float, float, float]:
    """Is and its parts (Iolr, Ist, Iq)."""
    n = noise_terms(params)
    xolr = params.olr + 0.2 * (64.0 + n["no"] - params.rlr)
    iolr = 20.0 * ((1.0 + (xolr / 8.0) ** 8) ** (1.0 / 8.0) - xolr / 8.0)
    ist = _ist(params)
    q = 37.0 - 15.0 * _lg(params.qdu)
    g = 1.07 + 0.258 * q + 0.0602 * q * q
    y = (n["ro"] - 100.0) / 15.0 + 46.0 / 8.4 - g / 9.0
    z = 46.0 / 30.0 - g / 40.0
    iq = 15.0 * _lg(1.0 + 10.0**y + 10.0**z)
    return iolr + ist + iq, iolr, ist, iq


def delay_impairment(params: EModelParams) -> DelayImpairment:
    """Id = Idte (talker echo) + Idle (listener echo) + Idd (absolute delay)."""
    p = params
    n = noise_terms(p)
    terv = p.telr - 40.0 * _lg((1.0 + p.t / 10.0) / (1.0 + p.t / 150.0)) + 6.0 * math.exp(-0.3 * p.t * p.t)
    ist = _ist(p)
    if p.stmr < 9.0:
        terv += ist / 2.0
    roe = -1.5 * (n["no"] - p.rlr)
    re = 80.0 + 2.5 * (terv - 14.0)
    idte = ((roe - re) / 2.0 + math.sqrt((roe - re) ** 2 / 4.0 + 100.0) - 1.0) * (1.0 - math.exp(-p.t))
    if p.stmr > 20.0:
        idte = math.sqrt(idte * idte + ist * ist)

    rle = 10.5 * (p.wepl + 7.0) * (p.tr + 1.0) ** -0.25
    idle = (n["ro"] - rle) / 2.0 + math.sqrt((n["ro"] - rle) ** 2 / 4.0 + 169.0)

    if p.ta <= p.m_t:
        idd = 0.0
    else:
        x = _lg(p.ta / p.m_t) / _lg(2.0)
        e = 6.0 * p.s_t
        idd = 25.0 * ((1.0 + x**e) ** (1.0 / e) - 3.0 * (1.0 + (x / 3.0) ** e) ** (1.0 / e) + 2.0)
    return DelayImpairment(idte + idle + idd, idte, idle, idd)


def effective_equipment_impairment(profile: CodecProfile, ppl_percent: float, burst_r: float | None = 1.0) -> float:
    """Ie-eff = Ie + (95 - Ie) * Ppl / (Ppl/BurstR + Bpl), Ppl in percent."""
    if burst_r is None:
        burst_r = 1.0
    if not 0.0 <= ppl_percent <= 100.0:
        raise ValueError(f"Ppl must be a percentage in [0, 100], got {ppl_percent}")
    if not burst_r >= 1.0:
        raise ValueError(f"BurstR must be >= 1, got {burst_r}")
    return profile.ie + (IE_CEILING - profile.ie) * ppl_percent / (ppl_percent / burst_r + profile.bpl)


def mos_from_r(r: float) -> float:
    if r <= 0.0:
        return 1.0
    if r >= 100.0:
        return 4.5
    # the cubic dips just under 1 for R below about 6.5; keep it on the 1..4.5 scale
    return max(1.0, 1.0 + 0.035 * r + r * (r - 60.0) * (100.0 - r) * 7e-6)


def transmission_rating(params: EModelParams, profile: CodecProfile, ppl_percent: float, burst_r: float | None = 1.0) -> MosReport:
    """Rating R = Ro - Is - Id - Ie-eff + A and the matching MOS-CQ."""
    ro = noise_terms(params)["ro"]
    is_, iolr, ist, iq = simultaneous_impairment(params)
    d = delay_impairment(params)
    ie_eff = effective_equipment_impairment(profile, ppl_percent, burst_r)
    r = ro - is_ - d.id - ie_eff + params.advantage
    return MosReport(
        r_factor=r,
        mos_cq=mos_from_r(r),
        ro=ro,
        is_=is_,
        id=d.id,
        idte=d.idte,
        idle=d.idle,
        idd=d.idd,
        ie_eff=ie_eff,
        advantage=params.advantage,
        extras={"iolr": iolr, "ist": ist, "iq": iq},
    )


def coding_delay(code: CodeParams, profile: CodecProfile) -> float:
    """One-way delay budget 2*N*d (ms) for single-block decoding plus playout."""
    return 2.0 * code.n_block * profile.packet_interval_ms
