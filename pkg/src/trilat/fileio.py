"""Problem files (TOML) and solution reports (JSON).

Problem file grammar, format tag ``trilat-problem/1``::

    format = "trilat-problem/1"
    mode = "planar2"            # planar2 | planar3 | spatial
    z0 = 0.0                    # required in planar modes, meters
    sigma0 = 1.0                # optional a-priori scale
    weight_matrix = [[1, 0], [0, 1]]   # optional; must be diagonal

    [[station]]
    id = "A"
    u = 0.0                     # meters
    v = 0.0
    w = 0.0                     # optional, default 0

    [[observation]]
    station = "A"
    distance = 2.2360679774997898   # meters, squared on ingestion
    # or: squared_distance = 5.0    # square meters
    sigma = 0.01                # optional, same unit as the value given
    weight = 1.0                # optional, default 1

    [config]                    # optional solver overrides
    seed = 0
    algebraic_frame = "offset"  # offset | user

Reports are JSON with every float written to 17 significant digits.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import tomli
import tomli_w

from trilat.errors import ParseError, ProblemError
from trilat.model import Mode, ObservationSet, ProblemSpec, Station
from trilat.numeric import SolverConfig

PROBLEM_FORMAT = "trilat-problem/1"
REPORT_FORMAT = "trilat-report/1"
TRUTH_FORMAT = "trilat-truth/1"

_TOP_KEYS = {"format", "mode", "z0", "sigma0", "weight_matrix", "station", "observation", "config"}
_STATION_KEYS = {"id", "u", "v", "w"}
_OBS_KEYS = {"station", "distance", "squared_distance", "sigma", "weight"}
_SOLVER_KEYS = {f.name for f in fields(SolverConfig)}
_CONFIG_KEYS = _SOLVER_KEYS | {"algebraic_frame"}
FRAMES = ("offset", "user")


@dataclass
class ParsedProblem:
    spec: ProblemSpec
    config: SolverConfig = field(default_factory=SolverConfig)
    frame: str = "offset"
    ingestion: list[dict] = field(default_factory=list)


def _load_toml(text: str) -> dict:
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(getattr(exc, "msg", str(exc)), line=exc.lineno, column=exc.colno) from None


def _read(source) -> str:
    if hasattr(source, "read"):
        return source.read()
    try:
        return Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {source}: {exc.strerror}") from None


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise ProblemError(f"{where}: unknown key(s) {', '.join(extra)}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemError(f"{where} must be a number, got {value!r}")
    return float(value)


def parse_config(table: dict, base: SolverConfig | None = None, where: str = "config"):
    """Solver overrides from a TOML table; returns (SolverConfig, frame or None)."""
    _reject_unknown(table, _CONFIG_KEYS, where)
    frame = table.get("algebraic_frame")
    if frame is not None and frame not in FRAMES:
        raise ProblemError(f"{where}.algebraic_frame must be one of {', '.join(FRAMES)}")
    values = {}
    for k, v in table.items():
        if k == "algebraic_frame":
            continue
        default = getattr(SolverConfig, k)
        if isinstance(default, int):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ProblemError(f"{where}.{k} must be an integer")
            values[k] = v
        else:
            values[k] = _number(v, f"{where}.{k}")
    try:
        cfg = SolverConfig(**{**_config_dict(base or SolverConfig()), **values})
    except ValueError as exc:
        raise ProblemError(f"{where}: {exc}") from None
    return cfg, frame


def load_config(source, base: SolverConfig | None = None) -> tuple[SolverConfig, str | None]:
    """A standalone --config file: the [config] keys at top level, applied over ``base``."""
    return parse_config(_load_toml(_read(source)), base, "config file")


def _config_dict(cfg: SolverConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(SolverConfig)}


def parse_problem_text(text: str, *, mode: str | None = None, z0: float | None = None) -> ParsedProblem:
    """Parse problem TOML; ``mode`` and ``z0`` override the file's values."""
    doc = _load_toml(text)
    _reject_unknown(doc, _TOP_KEYS, "problem")
    if doc.get("format") != PROBLEM_FORMAT:
        raise ProblemError(f"missing or unsupported format tag (expected format = \"{PROBLEM_FORMAT}\")")
    overridden = mode is not None
    try:
        mode = Mode(mode if overridden else doc.get("mode"))
    except ValueError:
        raise ProblemError(f"mode must be one of {', '.join(m.value for m in Mode)}") from None
    if z0 is None and "z0" in doc:
        z0 = _number(doc["z0"], "z0")
    if overridden and not mode.planar:
        # a file written for a planar mode may be re-solved in 3D
        z0 = None

    stations = []
    for i, st in enumerate(doc.get("station", [])):
        where = f"station[{i}]"
        _reject_unknown(st, _STATION_KEYS, where)
        if "id" not in st or not isinstance(st["id"], (str, int)) or isinstance(st["id"], bool):
            raise ProblemError(f"{where}: id (string) is required")
        for k in ("u", "v"):
            if k not in st:
                raise ProblemError(f"{where}: coordinate {k} is required")
        stations.append(
            Station(_number(st["u"], f"{where}.u"), _number(st["v"], f"{where}.v"),
                    _number(st.get("w", 0.0), f"{where}.w"), str(st["id"]))
        )
    if not stations:
        raise ProblemError("no stations given")
    index = {}
    for k, s in enumerate(stations):
        if s.id in index:
            raise ProblemError(f"duplicate station id {s.id!r}")
        index[s.id] = k

    n = len(stations)
    values = [None] * n
    weights = [1.0] * n
    sigmas = [None] * n
    ingestion = []
    for i, ob in enumerate(doc.get("observation", [])):
        where = f"observation[{i}]"
        _reject_unknown(ob, _OBS_KEYS, where)
        sid = str(ob.get("station", ""))
        if sid not in index:
            raise ProblemError(f"{where}: unknown station {ob.get('station')!r}")
        k = index[sid]
        if values[k] is not None:
            raise ProblemError(f"{where}: station {sid!r} observed twice")
        has_d, has_L = "distance" in ob, "squared_distance" in ob
        if has_d == has_L:
            raise ProblemError(f"{where}: give exactly one of distance, squared_distance")
        sigma = None if "sigma" not in ob else _number(ob["sigma"], f"{where}.sigma")
        if sigma is not None and sigma < 0:
            raise ProblemError(f"{where}.sigma must be >= 0")
        if has_d:
            d = _number(ob["distance"], f"{where}.distance")
            if d < 0:
                raise ProblemError(f"{where}.distance must be >= 0")
            values[k] = d * d
            if sigma is not None:
                sigma = 2.0 * d * sigma
            ingestion.append({"station": sid, "distance": d, "squared_distance": d * d,
                              "note": "distance squared on ingestion"})
        else:
            values[k] = _number(ob["squared_distance"], f"{where}.squared_distance")
        sigmas[k] = sigma
        if "weight" in ob:
            weights[k] = _number(ob["weight"], f"{where}.weight")
    missing = [stations[k].id for k in range(n) if values[k] is None]
    if missing:
        raise ProblemError(f"no observation for station(s) {', '.join(missing)}")

    if "weight_matrix" in doc:
        if any("weight" in ob for ob in doc.get("observation", [])):
            raise ProblemError("give weights either per observation or as weight_matrix, not both")
        try:
            P = np.asarray(doc["weight_matrix"], dtype=float)
        except (TypeError, ValueError):
            raise ProblemError("weight_matrix must be a square array of numbers") from None
        if P.shape != (n, n):
            raise ProblemError(f"weight_matrix must be {n}x{n}")
        if np.any(P - np.diag(np.diag(P))):
            raise ProblemError(
                "weight_matrix has off-diagonal entries; only diagonal weight matrices "
                "P = diag(p_i) are supported (uncorrelated observations)"
            )
        weights = list(np.diag(P))

    if any(s is None for s in sigmas) and any(s is not None for s in sigmas):
        raise ProblemError("give sigma for every observation or for none")
    obs = ObservationSet(
        tuple(values), tuple(weights),
        _number(doc.get("sigma0", 1.0), "sigma0"),
        None if sigmas[0] is None else tuple(sigmas),
    )
    spec = ProblemSpec(tuple(stations), obs, mode, z0)
    cfg, frame = parse_config(doc.get("config", {}))
    return ParsedProblem(spec, cfg, frame or "offset", ingestion)


def parse_problem(source) -> ProblemSpec:
    """Path, text stream or file-like source to a validated ProblemSpec."""
    return parse_problem_file(source).spec


def parse_problem_file(source, *, mode: str | None = None, z0: float | None = None) -> ParsedProblem:
    return parse_problem_text(_read(source), mode=mode, z0=z0)


def problem_document(spec: ProblemSpec, config: SolverConfig | None = None, frame: str | None = None) -> dict:
    doc: dict[str, Any] = {"format": PROBLEM_FORMAT, "mode": spec.mode.value}
    if spec.z0 is not None:
        doc["z0"] = spec.z0
    doc["sigma0"] = spec.observations.sigma0
    doc["station"] = [{"id": s.id, "u": s.u, "v": s.v, "w": s.w} for s in spec.stations]
    obs = spec.observations
    doc["observation"] = []
    for k, s in enumerate(spec.stations):
        entry = {"station": s.id, "squared_distance": obs.values[k], "weight": obs.weights[k]}
        if obs.sigmas is not None:
            entry["sigma"] = obs.sigmas[k]
        doc["observation"].append(entry)
    table = {}
    if config is not None:
        table.update(_config_dict(config))
    if frame is not None:
        table["algebraic_frame"] = frame
    if table:
        doc["config"] = table
    return doc


def serialize_problem(spec: ProblemSpec, config: SolverConfig | None = None, frame: str | None = None) -> str:
    """TOML text that parses back to an equal ProblemSpec."""
    if any(not s.id for s in spec.stations):
        spec = ProblemSpec(
            tuple(Station(s.u, s.v, s.w, s.id or f"S{k + 1}") for k, s in enumerate(spec.stations)),
            spec.observations, spec.mode, spec.z0,
        )
    return tomli_w.dumps(problem_document(spec, config, frame))


# ---- JSON reports ---------------------------------------------------------


def _float(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    s = format(v, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _encode(obj, out: io.StringIO, indent: int) -> None:
    pad = "  " * indent
    if obj is None:
        out.write("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.write("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(_float(float(obj)))
    elif isinstance(obj, str):
        out.write(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _encode(obj.tolist(), out, indent)
    elif isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.write(f"{pad}  {json.dumps(str(k))}: ")
            _encode(v, out, indent + 1)
            out.write(",\n" if i < len(items) - 1 else "\n")
        out.write(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.write("[]")
            return
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            out.write("[")
            for i, v in enumerate(obj):
                _encode(v, out, indent)
                if i < len(obj) - 1:
                    out.write(", ")
            out.write("]")
            return
        out.write("[\n")
        for i, v in enumerate(obj):
            out.write(pad + "  ")
            _encode(v, out, indent + 1)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(pad + "]")
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps_report(report: dict) -> str:
    """Deterministic JSON text; floats carry 17 significant digits."""
    out = io.StringIO()
    _encode(report, out, 0)
    out.write("\n")
    return out.getvalue()


def loads_report(text: str) -> dict:
    return json.loads(text)
