"""Command-line front end: configuration, scan orchestration and output files.

Usage::

    rydpenta scan-symmetric --config run.toml --out results/
    rydpenta field-check --set field_R=600
    rydpenta wells --set N_max=3 --set R_start=450 --set R_stop=800

Configuration is a flat TOML document whose keys are listed in
``DEFAULTS``; ``--set KEY=VALUE`` overrides single keys (values parsed as
TOML). Precedence, lowest first: defaults, config file, the
``RYDPENTA_CACHE_DIR`` environment variable (cache only), ``--set``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 geometry validity violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rydpenta import __version__, plots
from rydpenta.constants import DEBYE_AU, KRB_B_GHZ, KRB_DIPOLE_DEBYE, KRB_MASS_AU
from rydpenta.field import AXES, OracleFailure, SitePosition
from rydpenta.hamiltonian import ConfigurationError, GeometryValidityError, PentaMolModel, StateSpace
from rydpenta.rotor import MoleculeParams
from rydpenta.rydberg import IntegralCache, SolverFailure
from rydpenta.spectra import (
    InvariantViolation,
    ScanPlan,
    ScanResult,
    convergence_study,
    count_vibrational,
    find_wells,
    run_scan,
    trimol_limit_check,
)

log = logging.getLogger("rydpenta")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDITY = 0, 2, 3, 4

SUBCOMMANDS = (
    "scan-symmetric",
    "scan-asym-gap",
    "scan-asym-r1",
    "convergence",
    "wells",
    "trimol-check",
    "field-check",
)

CURVE_COLUMNS = ("R_bohr", "curve_id", "energy_GHz", "cos1", "cos2", "cos2_1", "cos2_2", "label")

# None means "derived from the subcommand" (R schedule) or "unset".
DEFAULTS: dict = {
    "R": None,
    "R_start": None,
    "R_stop": None,
    "R_step": 5.0,
    "gap": 175.0,
    "R1": 400.0,
    "min_gap": 100.0,
    "n": 20,
    "l_min": 3,
    "include_s": True,
    "s_n": 23,
    "N_max": 4,
    "M_J": [0],
    "potential": "model",
    "B": KRB_B_GHZ,
    "d": f"{KRB_DIPOLE_DEBYE} D",
    "select": "manifold",
    "n_states": 6,
    "sigma": None,
    "solver": "sparse",
    "overlap_threshold": 0.5,
    "reduced_mass": KRB_MASS_AU,
    "N_max_ladder": [4, 5],
    "compare_without_s": True,
    "trimol_threshold": 0.5,
    "field_R": 600.0,
    "output_dir": "rydpenta-out",
    "cache_dir": None,
    "workers": 1,
    "plots": True,
}

# Figure-window R schedules per subcommand: (start, stop) in bohr.
WINDOWS = {
    "scan-symmetric": (400.0, 1200.0),
    "convergence": (400.0, 1200.0),
    "wells": (400.0, 1000.0),
    "scan-asym-gap": (300.0, 1000.0),
    "scan-asym-r1": (550.0, 1500.0),
    "trimol-check": (550.0, 3000.0),
}

MODE_OF = {
    "scan-symmetric": "symmetric",
    "convergence": "symmetric",
    "wells": "symmetric",
    "scan-asym-gap": "asym-gap",
    "scan-asym-r1": "asym-r1",
    "trimol-check": "asym-r1",
}

_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([A-Za-z.]*)\s*$")


def _quantity(key: str, value, units: dict[str, float], bare: float) -> float:
    """Number or "<number> <unit>" string scaled to the internal unit."""
    if isinstance(value, bool):
        raise ConfigurationError(f"{key}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value) * bare
    if isinstance(value, str):
        m = _QUANTITY.match(value)
        if m:
            unit = m.group(2).lower()
            if unit in units:
                try:
                    return float(m.group(1)) * units[unit]
                except ValueError:
                    pass
            else:
                raise ConfigurationError(f"{key}: unit mismatch, {m.group(2)!r} not in {sorted(units)}")
    raise ConfigurationError(f"{key}: cannot parse {value!r}")


def parse_dipole(value) -> float:
    """Dipole moment in atomic units; bare numbers are already atomic units."""
    return _quantity("d", value, {"d": DEBYE_AU, "debye": DEBYE_AU, "au": 1.0, "a.u.": 1.0, "": 1.0}, 1.0)


def parse_rotational_constant(value) -> float:
    """Rotational constant in GHz; bare numbers are GHz."""
    return _quantity("B", value, {"ghz": 1.0, "mhz": 1e-3, "": 1.0}, 1.0)


def _as_int(key, v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigurationError(f"{key}: expected an integer, got {v!r}")
    return v


def _as_float(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{key}: expected a number, got {v!r}")
    return float(v)


def _as_bool(key, v):
    if not isinstance(v, bool):
        raise ConfigurationError(f"{key}: expected true or false, got {v!r}")
    return v


@dataclass(frozen=True)
class RunConfig:
    """Validated run settings. ``values`` holds every key with defaults filled."""

    subcommand: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def d(self) -> float:
        return self.values["d"]

    @property
    def params(self) -> MoleculeParams:
        return MoleculeParams(B=self["B"], d=self["d"])

    @property
    def R_schedule(self) -> tuple[float, ...]:
        return tuple(self["R"])

    def space(self, M_J: int, **changes) -> StateSpace:
        kw = dict(
            n=self["n"],
            l_min=self["l_min"],
            include_s=self["include_s"],
            s_n=self["s_n"],
            N_max=self["N_max"],
            M_J=M_J,
            potential=self["potential"],
        )
        kw.update(changes)
        return StateSpace(**kw)

    def plan(self, M_J: int, **changes) -> ScanPlan:
        kw = dict(
            mode=MODE_OF[self.subcommand],
            R=self.R_schedule,
            space=self.space(M_J),
            params=self.params,
            gap=self["gap"],
            R1=self["R1"],
            select=self["select"],
            n_states=self["n_states"],
            sigma=self["sigma"],
            solver=self["solver"],
            min_gap=self["min_gap"],
            overlap_threshold=self["overlap_threshold"],
            workers=self["workers"],
        )
        kw.update(changes)
        return ScanPlan(**kw)

    def echo(self) -> dict:
        """JSON-ready copy of the resolved settings."""
        return {"subcommand": self.subcommand, **self.values}

    @property
    def run_id(self) -> str:
        """Digest of everything that determines the numbers in the data files."""
        physics = {k: v for k, v in self.values.items() if k not in ("output_dir", "cache_dir", "plots")}
        raw = json.dumps({"subcommand": self.subcommand, "version": __version__, **physics}, sort_keys=True)
        return hashlib.sha256(raw.encode()).hexdigest()[:12]


def _load_toml(path) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"config file {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path}: {exc}") from exc


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigurationError(f"--set expects KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()  # unquoted strings such as 0.566 D
    return key, value


def parse_config(
    subcommand: str,
    path=None,
    overrides: dict | None = None,
    environ=None,
    check_output: bool = True,
) -> RunConfig:
    """Merge defaults, a TOML file and overrides into a validated RunConfig."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigurationError(f"unknown subcommand {subcommand!r}")
    environ = os.environ if environ is None else environ
    raw = dict(DEFAULTS)
    layers = []
    if path is not None:
        layers.append(_load_toml(path))
    env_cache = environ.get(IntegralCache.ENV)
    if env_cache:
        layers.append({"cache_dir": env_cache})
    if overrides:
        layers.append(dict(overrides))
    for layer in layers:
        for key, value in layer.items():
            if key not in DEFAULTS:
                raise ConfigurationError(f"unknown configuration key {key!r}")
            raw[key] = value
    return RunConfig(subcommand, _validate(subcommand, raw, check_output))


def config_from_metadata(path, check_output: bool = False) -> RunConfig:
    """Rebuild the RunConfig recorded in a metadata file."""
    try:
        echo = json.loads(Path(path).read_text())["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"metadata {path}: {exc}") from exc
    sub = echo.pop("subcommand")
    return parse_config(sub, overrides=echo, environ={}, check_output=check_output)


def _validate(subcommand: str, raw: dict, check_output: bool) -> dict:
    v = {}
    for key in ("n", "l_min", "s_n", "N_max", "n_states", "workers"):
        v[key] = _as_int(key, raw[key])
    if v["N_max"] < 0:
        raise ConfigurationError(f"N_max: must be non-negative, got {v['N_max']}")
    for key in ("n_states", "workers", "n", "s_n"):
        if v[key] < 1:
            raise ConfigurationError(f"{key}: must be positive, got {v[key]}")
    for key in ("include_s", "compare_without_s", "plots"):
        v[key] = _as_bool(key, raw[key])
    for key in ("R_step", "gap", "R1", "min_gap", "overlap_threshold", "reduced_mass", "trimol_threshold", "field_R"):
        v[key] = _as_float(key, raw[key])
    for key in ("R_step", "gap", "R1", "reduced_mass", "trimol_threshold", "field_R"):
        if not v[key] > 0:
            raise ConfigurationError(f"{key}: must be positive, got {v[key]}")
    if v["min_gap"] < 0:
        raise ConfigurationError(f"min_gap: must be non-negative, got {v['min_gap']}")
    v["sigma"] = None if raw["sigma"] is None else _as_float("sigma", raw["sigma"])
    v["B"] = parse_rotational_constant(raw["B"])
    v["d"] = parse_dipole(raw["d"])
    if not v["B"] > 0:
        raise ConfigurationError(f"B: must be positive, got {v['B']}")
    if not v["d"] > 0:
        raise ConfigurationError(f"d: must be positive, got {v['d']}")
    for key in ("potential", "select", "solver"):
        if not isinstance(raw[key], str):
            raise ConfigurationError(f"{key}: expected a string, got {raw[key]!r}")
        v[key] = raw[key]
    if v["potential"] not in ("model", "hydrogenic"):
        raise ConfigurationError(f"potential: expected 'model' or 'hydrogenic', got {v['potential']!r}")
    if v["solver"] not in ("sparse", "dense"):
        raise ConfigurationError(f"solver: expected 'sparse' or 'dense', got {v['solver']!r}")

    mj = raw["M_J"]
    mj = [mj] if isinstance(mj, int) and not isinstance(mj, bool) else mj
    if not isinstance(mj, list) or not mj:
        raise ConfigurationError("M_J: must be an integer or a non-empty list of integers")
    v["M_J"] = [_as_int("M_J", m) for m in mj]
    if len(set(v["M_J"])) != len(v["M_J"]):
        raise ConfigurationError("M_J: duplicate entries")

    ladder = raw["N_max_ladder"]
    if not isinstance(ladder, list) or len(ladder) < 2:
        raise ConfigurationError("N_max_ladder: need a list of at least two N_max values")
    v["N_max_ladder"] = [_as_int("N_max_ladder", x) for x in ladder]
    if any(x < 0 for x in v["N_max_ladder"]) or v["N_max_ladder"] != sorted(set(v["N_max_ladder"])):
        raise ConfigurationError("N_max_ladder: must be strictly increasing and non-negative")

    v["R"] = _schedule(subcommand, raw, v)

    for key in ("output_dir", "cache_dir"):
        val = raw[key]
        if val is not None and not isinstance(val, str):
            raise ConfigurationError(f"{key}: expected a path string, got {val!r}")
        v[key] = val
    if check_output:
        for key in ("output_dir", "cache_dir"):
            if v[key] is not None:
                _check_writable(key, Path(v[key]))
    # Fail early on anything the domain types reject.
    try:
        space = StateSpace(n=v["n"], l_min=v["l_min"], include_s=v["include_s"], s_n=v["s_n"], N_max=v["N_max"])
        MoleculeParams(B=v["B"], d=v["d"])
        ScanPlan(
            mode=MODE_OF.get(subcommand, "symmetric"),
            R=v["R"] or (1.0,),
            space=space,
            gap=v["gap"],
            R1=v["R1"],
            select=v["select"],
            n_states=v["n_states"],
        )
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    return v


def _schedule(subcommand: str, raw: dict, v: dict) -> list[float]:
    if subcommand == "field-check":
        return [v["field_R"]]
    if raw["R"] is not None:
        if not isinstance(raw["R"], list) or not raw["R"]:
            raise ConfigurationError("R: expected a non-empty list of radii")
        R = [_as_float("R", x) for x in raw["R"]]
    else:
        lo, hi = WINDOWS[subcommand]
        lo = lo if raw["R_start"] is None else _as_float("R_start", raw["R_start"])
        hi = hi if raw["R_stop"] is None else _as_float("R_stop", raw["R_stop"])
        if hi < lo:
            raise ConfigurationError(f"R_stop ({hi}) is below R_start ({lo})")
        n = int(math.floor((hi - lo) / v["R_step"] + 1e-9))
        R = [lo + k * v["R_step"] for k in range(n + 1)]
    if any(r <= 0 for r in R) or any(b <= a for a, b in zip(R, R[1:])):
        raise ConfigurationError("R: radii must be positive and strictly increasing")
    return R


def _check_writable(key: str, path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"{key}: cannot create {path}: {exc.strerror}") from exc
    if not os.access(path, os.W_OK):
        raise ConfigurationError(f"{key}: {path} is not writable")


@dataclass
class ResultBundle:
    """Files written by one run, keyed by role, plus the metadata document."""

    config: RunConfig
    files: dict[str, str] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    scans: dict[int, ScanResult] = field(default_factory=dict)
    reports: dict = field(default_factory=dict)


class _Writer:
    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config["output_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def path(self, role: str, name: str) -> Path:
        self.files[role] = name
        return self.out / name

    def json(self, role: str, name: str, payload: dict) -> Path:
        p = self.path(role, name)
        doc = {"run_id": self.config.run_id, **payload}
        p.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")
        return p

    def plot(self, role: str, func, data_name: str) -> None:
        stem = Path(data_name).stem
        script = self.path(f"{role}_script", f"plot_{stem}.py")
        script.write_text(plots.plot_script(func, script.name, data_name, f"{stem}.png"))
        if self.config["plots"]:
            image = self.out / f"{stem}.png"
            if plots.render(func, self.out / data_name, image):
                self.files[f"{role}_image"] = image.name


def write_curves(path, curves) -> None:
    """Curves as CSV in ``CURVE_COLUMNS`` order; floats keep full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for c in sorted(curves, key=lambda c: c.curve_id):
            for k in range(len(c.R)):
                w.writerow(
                    [
                        repr(float(c.R[k])),
                        c.curve_id,
                        repr(float(c.energy[k])),
                        repr(float(c.cos1[k])),
                        repr(float(c.cos2[k])),
                        repr(float(c.cos2_1[k])),
                        repr(float(c.cos2_2[k])),
                        c.label,
                    ]
                )


def read_curves(path) -> list[dict]:
    """Rows of a curves CSV with numeric columns restored to floats."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out = {k: float(row[k]) for k in CURVE_COLUMNS if k not in ("curve_id", "label")}
            out["curve_id"] = int(row["curve_id"])
            out["label"] = row["label"]
            rows.append(out)
    return rows


def _scan_meta(result: ScanResult) -> dict:
    return {
        "basis_dimension": result.dim,
        "timings": result.timings,
        "validity": result.validity,
        "flagged_crossings": {str(c.curve_id): c.flagged_R for c in result.curves if c.flagged_R},
        "curve_labels": {str(c.curve_id): c.label for c in result.curves},
    }


def _model(config: RunConfig, space: StateSpace, cache: IntegralCache, shared: dict) -> PentaMolModel:
    """Model for one M_J; radial kernels are shared between M_J blocks."""
    model = PentaMolModel(space, config.params, cache=cache)
    if "field" in shared:
        model.field = shared["field"]
    shared["field"] = model.field
    return model


def _emit_scans(writer: _Writer, scans: dict[int, ScanResult]) -> None:
    for mj, result in scans.items():
        name = f"curves_MJ{mj}.csv"
        write_curves(writer.path(f"curves_MJ{mj}", name), result.curves)
        writer.plot(f"curves_MJ{mj}", plots.plot_curves, name)


def run(subcommand: str, config: RunConfig) -> ResultBundle:
    """Execute ``subcommand`` and write its data, plot scripts and metadata."""
    t0 = time.perf_counter()
    cache = IntegralCache(config["cache_dir"]) if config["cache_dir"] else None
    writer = _Writer(config)
    bundle = ResultBundle(config)
    meta: dict = {"runs": {}}

    if subcommand == "field-check":
        meta["runs"]["field"] = _field_check(config, writer, cache)
    elif subcommand == "convergence":
        for mj in config["M_J"]:
            plan = config.plan(mj, select="manifold")
            table = convergence_study(
                plan,
                N_max_ladder=tuple(config["N_max_ladder"]),
                compare_without_s=config["compare_without_s"],
                n_curves=config["n_states"],
                cache=cache,
            )
            writer.json(f"convergence_MJ{mj}", f"convergence_MJ{mj}.json", table.as_dict())
            bundle.reports[f"convergence_MJ{mj}"] = table
            meta["runs"][f"MJ{mj}"] = {
                "max_relative_error": [c["max_relative_error"] for c in table.comparisons],
            }
    else:
        shared: dict = {}
        for mj in config["M_J"]:
            plan = config.plan(mj)
            result = run_scan(plan, model=_model(config, plan.space, cache, shared))
            bundle.scans[mj] = result
            meta["runs"][f"MJ{mj}"] = _scan_meta(result)
            if subcommand == "wells":
                payload = _wells(config, result)
                writer.json(f"wells_MJ{mj}", f"wells_MJ{mj}.json", payload)
                bundle.reports[f"wells_MJ{mj}"] = payload
            elif subcommand == "trimol-check":
                rep = trimol_limit_check(plan, threshold=config["trimol_threshold"], cache=cache)
                writer.json(f"trimol_MJ{mj}", f"trimol_MJ{mj}.json", rep.as_dict())
                bundle.reports[f"trimol_MJ{mj}"] = rep
                meta["runs"][f"MJ{mj}"]["trimol_passed"] = rep.passed
        _emit_scans(writer, bundle.scans)

    meta.update(
        {
            "run_id": config.run_id,
            "version": __version__,
            "config": config.echo(),
            "wall_time_s": time.perf_counter() - t0,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "cache": None if cache is None else {"hits": cache.hits, "misses": cache.misses},
        }
    )
    writer.files["metadata"] = "metadata.json"
    meta["files"] = dict(sorted(writer.files.items()))
    (writer.out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    bundle.files = meta["files"]
    bundle.metadata = meta
    return bundle


def _wells(config: RunConfig, result: ScanResult) -> dict:
    """Wells of the lowest adiabatic curve of a scan, with level counts."""
    R = np.array(result.plan.R)
    E = np.array([np.min(e) if len(e) else np.nan for e in result.energies])
    wells = []
    for w in find_wells(R, E):
        lv = count_vibrational(w, reduced_mass=config["reduced_mass"])
        d = w.as_dict()
        d.update({"n_levels": lv.count, "levels_GHz": lv.energies, "warning": lv.warning})
        wells.append(d)
    return {
        "curve": "lowest",
        "reduced_mass_me": config["reduced_mass"],
        "wells": wells,
        "outermost": wells[-1] if wells else None,
    }


def field_table(config: RunConfig, cache: IntegralCache | None = None) -> list[dict]:
    """<n1 l1 0| F_Z |n2 l2 0> at R = field_R on the +Z axis, all orbital pairs."""
    space = config.space(0)
    model = PentaMolModel(space.with_(N_max=0), config.params, cache=cache)
    site = SitePosition.on_z(config["field_R"], +1)
    states = [(n, l, 0) for n, l in space.orbitals]
    FZ = model.field.matrices(site, states)["Z"]
    rows = []
    for i, (n1, l1, _) in enumerate(states):
        for j, (n2, l2, _) in enumerate(states):
            v = FZ[i, j]
            rows.append({"n1": n1, "l1": l1, "n2": n2, "l2": l2, "FZ_au": float(v.real), "abs_FZ_au": float(abs(v))})
    return rows


def _field_check(config: RunConfig, writer: _Writer, cache) -> dict:
    rows = field_table(config, cache)
    name = "field_table.csv"
    with open(writer.path("field_table", name), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ("n1", "l1", "n2", "l2", "FZ_au", "abs_FZ_au")
        w.writerow(cols)
        for r in rows:
            w.writerow([r["n1"], r["l1"], r["n2"], r["l2"], repr(r["FZ_au"]), repr(r["abs_FZ_au"])])
    writer.plot("field_table", plots.plot_field_table, name)
    return {"R_bohr": config["field_R"], "axes": list(AXES), "orbitals": len({(r["n1"], r["l1"]) for r in rows})}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rydpenta",
        description="Potential curves of a Rydberg atom bound to two polar rotors.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    helps = {
        "scan-symmetric": "molecules on opposite sides at equal R",
        "scan-asym-gap": "same side, fixed gap R2 - R1",
        "scan-asym-r1": "same side, R1 fixed, R2 scanned",
        "convergence": "relative change with N_max and with the s orbital removed",
        "wells": "wells of the lowest symmetric curve and their vibrational levels",
        "trimol-check": "far tail of an R1-fixed scan against the one-molecule limit",
        "field-check": "table of |<l1,0|F_Z|l2,0>| at one R",
    }
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", help="TOML configuration file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
        s.add_argument("--out", help="output directory (same as --set output_dir=...)")
        s.add_argument("--cache-dir", help="kernel cache directory")
        s.add_argument("--no-plots", action="store_true", help="write plot scripts but do not render images")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    stage = "configuration"
    try:
        overrides = dict(_parse_override(t) for t in args.set)
        if args.out:
            overrides["output_dir"] = args.out
        if args.cache_dir:
            overrides["cache_dir"] = args.cache_dir
        if args.no_plots:
            overrides["plots"] = False
        config = parse_config(args.subcommand, args.config, overrides)
        stage = args.subcommand
        bundle = run(args.subcommand, config)
    except GeometryValidityError as exc:
        print(f"rydpenta: validity violation during {stage}: {exc}", file=sys.stderr)
        return EXIT_VALIDITY
    except (SolverFailure, OracleFailure, InvariantViolation) as exc:
        print(f"rydpenta: solver failure during {stage}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConfigurationError as exc:
        print(f"rydpenta: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if stage == "configuration":
            print(f"rydpenta: configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise
    out = Path(bundle.config["output_dir"])
    for role, name in bundle.files.items():
        print(f"{role}\t{out / name}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
