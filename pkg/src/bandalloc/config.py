"""JSON configuration documents.

Schema::

    {
      "slot": {"T": 1e-3, "tau": 1e-4, "b": 1000},          # optional for tabulated configs
      "bands": [{"W": .., "lambda_p": .., "gamma_p": .., "sigma2_p": ..}
                | {"pi": .., "pout_bar_primary": ..}, ...],
      "sus":   [{"lambda": .., "gamma": .., "sigma2": x | [x per band]}
                | {"lambda": .., "pout_bar": [x per band]}, ...]
    }

Entries may mix both styles; the two must then agree.  ``name`` is an
optional per-SU label.  All problems are collected into one
:class:`ConfigError`.
"""
from __future__ import annotations

import hashlib
import json
import numbers
from pathlib import Path

from .model import BandConfig, ModelError, SuConfig, SystemConfig, build_success_matrix


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))


def _num(d: dict, key: str, where: str, problems: list, *, lo=None, hi=None, lo_open=False, required=True):
    if key not in d:
        if required:
            problems.append(f"{where}: missing '{key}'")
        return None
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, numbers.Real):
        problems.append(f"{where}.{key}: expected a number, got {v!r}")
        return None
    v = float(v)
    if lo is not None and (v < lo or (lo_open and v == lo)):
        problems.append(f"{where}.{key}: {v} below allowed range")
    if hi is not None and v > hi:
        problems.append(f"{where}.{key}: {v} above allowed range")
    return v


def _band(entry, j: int, problems: list) -> BandConfig:
    where = f"bands[{j}]"
    if not isinstance(entry, dict):
        problems.append(f"{where}: expected an object")
        return BandConfig()
    physical = "W" in entry
    tabulated = "pi" in entry
    if not physical and not tabulated:
        problems.append(f"{where}: needs either 'W' (physical) or 'pi' (tabulated)")
        return BandConfig()
    kw = {}
    if physical:
        kw["bandwidth_hz"] = _num(entry, "W", where, problems, lo=0.0)
        virtual = kw["bandwidth_hz"] == 0.0
        kw["primary_arrival_rate"] = _num(entry, "lambda_p", where, problems, lo=0.0, hi=1.0, required=not tabulated and not virtual)
        kw["primary_snr"] = _num(entry, "gamma_p", where, problems, lo=0.0, lo_open=True, required=not tabulated and not virtual)
        kw["primary_channel_var"] = _num(entry, "sigma2_p", where, problems, lo=0.0, lo_open=True, required=not tabulated and not virtual)
    if tabulated:
        kw["availability"] = _num(entry, "pi", where, problems, lo=0.0, hi=1.0, lo_open=True)
        kw["primary_success"] = _num(entry, "pout_bar_primary", where, problems, lo=0.0, hi=1.0, lo_open=True, required=False)
        if kw["primary_success"] is None and not physical:
            kw["primary_success"] = 1.0
    return BandConfig(**kw)


def _su(entry, k: int, num_bands: int, problems: list) -> SuConfig:
    where = f"sus[{k}]"
    if not isinstance(entry, dict):
        problems.append(f"{where}: expected an object")
        return SuConfig(0.0)
    lam = _num(entry, "lambda", where, problems, lo=0.0, hi=1.0)
    kw = {"arrival_rate": lam if lam is not None else 0.0, "name": entry.get("name")}
    if "gamma" in entry or "sigma2" in entry:
        kw["snr"] = _num(entry, "gamma", where, problems, lo=0.0, lo_open=True)
        s2 = entry.get("sigma2")
        if isinstance(s2, list):
            vals = s2
        elif s2 is None:
            problems.append(f"{where}: missing 'sigma2'")
            vals = []
        else:
            vals = [s2] * num_bands
        if len(vals) != num_bands:
            problems.append(f"{where}.sigma2: expected {num_bands} values, got {len(vals)}")
        elif not all(isinstance(v, numbers.Real) and not isinstance(v, bool) and v > 0 for v in vals):
            problems.append(f"{where}.sigma2: entries must be positive numbers")
        else:
            kw["channel_var_per_band"] = tuple(float(v) for v in vals)
    if "pout_bar" in entry:
        vals = entry["pout_bar"]
        if not isinstance(vals, list) or len(vals) != num_bands:
            problems.append(f"{where}.pout_bar: expected a list of {num_bands} probabilities")
        elif not all(isinstance(v, numbers.Real) and not isinstance(v, bool) and 0 <= v <= 1 for v in vals):
            problems.append(f"{where}.pout_bar: entries must lie in [0, 1]")
        else:
            kw["success_per_band"] = tuple(float(v) for v in vals)
    if "snr" not in kw and "success_per_band" not in kw and "pout_bar" not in entry:
        problems.append(f"{where}: needs either 'gamma'/'sigma2' (physical) or 'pout_bar' (tabulated)")
    return SuConfig(**kw)


def parse_config(doc: dict, check_primaries: bool = True) -> SystemConfig:
    """Validate a config document.

    With ``check_primaries`` the success matrix is built once, which rejects
    unstable primary queues; the simulator can run those, so it may opt out.
    """
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["top level must be an object"])
    bands_raw = doc.get("bands")
    sus_raw = doc.get("sus")
    if not isinstance(bands_raw, list) or not bands_raw:
        problems.append("'bands' must be a non-empty list")
        bands_raw = []
    if not isinstance(sus_raw, list) or not sus_raw:
        problems.append("'sus' must be a non-empty list")
        sus_raw = []
    slot = doc.get("slot", {})
    slot_kw = {}
    if not isinstance(slot, dict):
        problems.append("'slot' must be an object")
    else:
        T = _num(slot, "T", "slot", problems, lo=0.0, lo_open=True, required=False)
        tau = _num(slot, "tau", "slot", problems, lo=0.0, required=False)
        b = _num(slot, "b", "slot", problems, lo=0.0, lo_open=True, required=False)
        if T is not None:
            slot_kw["slot_duration_s"] = T
        if tau is not None:
            slot_kw["sensing_duration_s"] = tau
        if b is not None:
            slot_kw["packet_bits"] = b
        if T is not None and tau is not None and tau >= T:
            problems.append(f"slot: tau={tau} must be shorter than T={T}")
    needs_slot = any(isinstance(e, dict) and "W" in e for e in bands_raw)
    if needs_slot and not {"slot_duration_s", "sensing_duration_s", "packet_bits"} <= slot_kw.keys():
        problems.append("slot: 'T', 'tau' and 'b' are required when any band is given physically")

    bands = tuple(_band(e, j, problems) for j, e in enumerate(bands_raw))
    sus = tuple(_su(e, k, len(bands_raw), problems) for k, e in enumerate(sus_raw))
    names = [s.name for s in sus if s.name]
    if len(set(names)) != len(names):
        problems.append("SU names must be unique")
    if problems:
        raise ConfigError(problems)
    try:
        config = SystemConfig(len(bands), len(sus), bands=bands, sus=sus, **slot_kw)
        if check_primaries:
            build_success_matrix(config)
    except ModelError as exc:
        raise ConfigError([str(exc)]) from exc
    return config


def load_config(path, check_primaries: bool = True) -> SystemConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from exc
    return parse_config(doc, check_primaries)


def config_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
