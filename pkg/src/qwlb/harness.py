"""Experiment configuration, dispatch and file outputs.

Configs are INI-style text (flat key = value pairs grouped in sections).
Every key is optional and falls back to a documented default; unknown
sections or keys are hard errors that name the offending key and its line,
so typos cannot silently change an experiment.  Any value can also be
overridden from the command line with ``--set section.key=value`` (flags
win over the file).

All CSV outputs start with provenance comments (config hash, seed,
package version) followed by a plain header row; runs with identical
config and seed produce byte-identical files, serial or threaded.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, coin, curved, equilibrium, fields, multid, solvers, walk
from .errors import ConfigError
from .fields import Boundary, Gaussian, Delta, Lattice1D, MassField, PlaneWave, SpinorField1D

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str = ""


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _complex(s: str) -> complex:
    return complex(s.replace(" ", ""))


SCHEMES = ("split", "qlb", "naive", "equilibrium", "curved", "walk2d")

SCHEMA: dict[str, dict[str, Key]] = {
    "run": {
        "scheme": Key(str, "qlb", f"one of {SCHEMES}"),
        "n_steps": Key(int, 100),
        "seed": Key(int, 1),
        "snapshot_stride": Key(int, 100),
        "record_stride": Key(int, 10),
        "output_dir": Key(str, "out"),
        "threads": Key(int, 0, "0 = all available cores"),
    },
    "lattice": {
        "n_sites": Key(int, 512),
        "dz": Key(float, 1.0),
        "dt": Key(float, 1.0),
        "boundary": Key(str, "periodic"),
    },
    "grid": {
        "n_z": Key(int, 256),
        "n_y": Key(int, 256),
        "dz": Key(float, 1.0),
        "dt": Key(float, 1.0),
    },
    "mass": {
        "profile": Key(str, "constant", "constant | csv | gaussian-bump"),
        "m": Key(float, None, "free-mass shorthand for my"),
        "m0": Key(float, 0.0),
        "mx": Key(float, 0.0),
        "my": Key(float, 0.0),
        "mz": Key(float, 0.0),
        "csv_path": Key(str, None),
        "amplitude": Key(float, 0.5),
        "width": Key(float, 16.0),
        "center": Key(float, None),
    },
    "initial": {
        "kind": Key(str, "gaussian", "gaussian | plane_wave | delta"),
        "sigma": Key(float, 48.0),
        "k0": Key(float, 0.0),
        "k": Key(float, 0.0),
        "j0": Key(int, 0),
        "center": Key(float, None),
        "w1": Key(_complex, complex(1.0)),
        "w2": Key(_complex, complex(0.0)),
    },
    "curved": {
        "profile": Key(str, "constant", "constant | linear | gaussian-bump | csv"),
        "value": Key(float, None),
        "a0": Key(float, None),
        "slope": Key(float, None),
        "base": Key(float, None),
        "depth": Key(float, None),
        "width": Key(float, None),
        "center": Key(float, None),
        "csv_path": Key(str, None),
        "q": Key(str, "mass", "none | mass | csv"),
        "q_csv_path": Key(str, None),
    },
    "equilibrium": {
        "tau": Key(float, None, "defaults to dt"),
        "omega_form": Key(str, "exact", "exact | paper"),
    },
    "experiment2d": {
        "kind": Key(str, "njl", "impurity | njl"),
        "sigma": Key(float, 12.0),
        "k_z": Key(float, 0.117),
        "k_y": Key(float, 0.0),
        "concentration": Key(float, 0.005),
        "v": Key(float, 0.25),
        "mass": Key(float, 0.0),
        "k": Key(float, 0.4),
        "g": Key(float, 0.0),
        "m": Key(float, 0.0),
        "c_u": Key(float, 0.5),
        "c_d": Key(float, 0.5),
        "center_z": Key(float, None),
        "center_y": Key(float, None),
    },
}


@dataclass
class ExperimentConfig:
    """Fully resolved configuration: values[section][key] is typed."""

    values: dict[str, dict[str, Any]]
    source_text: str = ""

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    # execution details that do not influence the numbers; kept out of the
    # provenance hash so that serial/threaded runs and runs landing in
    # different directories stay byte-identical
    _HASH_EXEMPT = frozenset({("run", "output_dir"), ("run", "threads")})

    def canonical_text(self) -> str:
        buf = io.StringIO()
        for section in sorted(self.values):
            for key in sorted(self.values[section]):
                if (section, key) in self._HASH_EXEMPT:
                    continue
                buf.write(f"{section}.{key}={self.values[section][key]!r}\n")
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def provenance(self) -> dict[str, Any]:
        return {
            "config_sha256": self.config_hash(),
            "seed": self.values["run"]["seed"],
            "version": __version__,
        }

    def resolved_threads(self) -> int:
        t = self.values["run"]["threads"]
        return t if t > 0 else (os.cpu_count() or 1)


def _find_line(text: str, section: str, key: str) -> int | None:
    cur = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
        elif cur == section and s and not s.startswith(("#", ";")):
            if s.split("=", 1)[0].strip() == key:
                return lineno
    return None


def parse_config(path: str | Path | None = None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load, validate and fill a configuration.

    ``overrides`` are ``section.key=value`` strings applied after the file
    (so command-line flags win).  Unknown keys raise ConfigError naming the
    key path (and the line, when it came from the file).
    """
    values = {sec: {k: spec.default for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    text = ""
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text()
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}] in {path}")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    line = _find_line(text, section, key)
                    where = f"{path}:{line}" if line else str(path)
                    raise ConfigError(f"unknown key '{section}.{key}' ({where})")
                try:
                    values[section][key] = SCHEMA[section][key].parse(raw)
                except ValueError as exc:
                    line = _find_line(text, section, key)
                    raise ConfigError(
                        f"bad value for '{section}.{key}' at {path}:{line}: {exc}"
                    ) from exc
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown key '{section}.{key}' (from --set)")
        try:
            values[section][key] = SCHEMA[section][key].parse(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for '{section}.{key}' (from --set): {exc}") from exc

    cfg = ExperimentConfig(values=values, source_text=text)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    run = cfg["run"]
    if run["scheme"] not in SCHEMES:
        raise ConfigError(f"run.scheme must be one of {SCHEMES}, got {run['scheme']!r}")
    if run["n_steps"] < 0:
        raise ConfigError(f"run.n_steps must be >= 0, got {run['n_steps']}")
    for key in ("snapshot_stride", "record_stride"):
        if run[key] <= 0:
            raise ConfigError(f"run.{key} must be positive")
    lat = cfg["lattice"]
    if lat["n_sites"] < 4:
        raise ConfigError(f"lattice.n_sites must be >= 4, got {lat['n_sites']}")
    if lat["dz"] <= 0 or lat["dt"] <= 0:
        raise ConfigError("lattice.dz and lattice.dt must be positive")
    if lat["boundary"] not in ("periodic", "reflecting"):
        raise ConfigError(f"lattice.boundary must be periodic or reflecting, got {lat['boundary']!r}")
    if run["scheme"] in ("split", "qlb", "naive") and lat["dz"] != lat["dt"]:
        raise ConfigError(
            f"scheme {run['scheme']} requires unit CFL (lattice.dz == lattice.dt), "
            f"got dz={lat['dz']}, dt={lat['dt']}"
        )
    mass = cfg["mass"]
    if mass["profile"] not in ("constant", "csv", "gaussian-bump"):
        raise ConfigError(f"mass.profile must be constant, csv or gaussian-bump, got {mass['profile']!r}")
    if mass["profile"] == "csv" and not mass["csv_path"]:
        raise ConfigError("mass.profile=csv requires mass.csv_path")
    init = cfg["initial"]
    if init["kind"] not in ("gaussian", "plane_wave", "delta"):
        raise ConfigError(f"initial.kind must be gaussian, plane_wave or delta, got {init['kind']!r}")
    if init["kind"] == "gaussian" and init["sigma"] <= 0:
        raise ConfigError(f"initial.sigma must be positive, got {init['sigma']}")
    exp = cfg["experiment2d"]
    if exp["kind"] not in ("impurity", "njl"):
        raise ConfigError(f"experiment2d.kind must be impurity or njl, got {exp['kind']!r}")
    if not 0.0 <= exp["concentration"] <= 1.0:
        raise ConfigError(f"experiment2d.concentration must lie in [0, 1], got {exp['concentration']}")
    eq = cfg["equilibrium"]
    if eq["omega_form"] not in ("exact", "paper"):
        raise ConfigError(f"equilibrium.omega_form must be exact or paper, got {eq['omega_form']!r}")
    if eq["tau"] is not None and eq["tau"] <= 0:
        raise ConfigError(f"equilibrium.tau must be positive, got {eq['tau']}")


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_lattice(cfg: ExperimentConfig) -> Lattice1D:
    lat = cfg["lattice"]
    return Lattice1D(
        n_sites=lat["n_sites"], dz=lat["dz"], dt=lat["dt"], boundary=Boundary(lat["boundary"])
    )


def load_mass_csv(path: str) -> MassField:
    """Static per-site components from CSV with header j,m0,mx,my,mz."""
    try:
        rows = np.genfromtxt(path, delimiter=",", names=True, comments="#")
    except OSError as exc:
        raise ConfigError(f"cannot read mass CSV {path}: {exc}") from exc
    expected = ("j", "m0", "mx", "my", "mz")
    if rows.dtype.names is None or tuple(rows.dtype.names) != expected:
        raise ConfigError(f"mass CSV {path} must have header j,m0,mx,my,mz, got {rows.dtype.names}")
    order = np.argsort(rows["j"])
    return MassField.from_site_arrays(
        rows["m0"][order], rows["mx"][order], rows["my"][order], rows["mz"][order]
    )


def build_mass(cfg: ExperimentConfig, lat: Lattice1D) -> MassField:
    mass = cfg["mass"]
    if mass["profile"] == "constant":
        my = mass["m"] if mass["m"] is not None else mass["my"]
        return MassField.constant(mass["m0"], mass["mx"], my, mass["mz"])
    if mass["profile"] == "csv":
        mf = load_mass_csv(mass["csv_path"])
        probe = mf.sample_row(lat, 0)[0]
        if probe.shape[0] != lat.n_sites:
            raise ConfigError(
                f"mass CSV has {probe.shape[0]} sites but lattice.n_sites={lat.n_sites}"
            )
        return mf
    # gaussian-bump on the my component
    z = lat.z()
    center = mass["center"] if mass["center"] is not None else 0.5 * lat.n_sites * lat.dz
    my = mass["amplitude"] * np.exp(-((z - center) ** 2) / (2.0 * mass["width"] ** 2))
    zero = np.zeros_like(my)
    return MassField.from_site_arrays(zero, zero, my, zero)


def build_initial(cfg: ExperimentConfig, lat: Lattice1D) -> SpinorField1D:
    init = cfg["initial"]
    weights = (init["w1"], init["w2"])
    if init["kind"] == "gaussian":
        kind = Gaussian(sigma=init["sigma"], k0=init["k0"], center=init["center"])
    elif init["kind"] == "plane_wave":
        kind = PlaneWave(k=init["k"])
    else:
        kind = Delta(j0=init["j0"])
    return fields.init_packet(lat, kind, weights)


def build_curved(cfg: ExperimentConfig, lat: Lattice1D, mass: MassField) -> curved.CurvedConfig:
    cc = cfg["curved"]
    c = lat.c
    if cc["profile"] == "csv":
        if not cc["csv_path"]:
            raise ConfigError("curved.profile=csv requires curved.csv_path")
        rows = np.genfromtxt(cc["csv_path"], delimiter=",", names=True, comments="#")
        names = tuple(n.lower() for n in rows.dtype.names or ())
        if names != ("j", "a"):
            raise ConfigError(f"advection CSV must have header j,A, got {rows.dtype.names}")
        a = rows[rows.dtype.names[1]][np.argsort(rows[rows.dtype.names[0]])]
        if a.shape[0] != lat.n_sites:
            raise ConfigError(f"advection CSV has {a.shape[0]} sites, lattice has {lat.n_sites}")
    else:
        params = {
            k: cc[k]
            for k in ("value", "a0", "slope", "base", "depth", "width", "center")
            if cc[k] is not None
        }
        a = curved.advection_profile(cc["profile"], lat, c, **params)
    if cc["q"] == "none":
        return curved.CurvedConfig(a, None, c)
    if cc["q"] == "mass":
        return curved.CurvedConfig.from_mass(a, mass, lat)
    if cc["q"] == "csv":
        if not cc["q_csv_path"]:
            raise ConfigError("curved.q=csv requires curved.q_csv_path")
        return curved.CurvedConfig(a, load_q_csv(cc["q_csv_path"], lat), c)
    raise ConfigError(f"curved.q must be none, mass or csv, got {cc['q']!r}")


def load_q_csv(path: str, lat: Lattice1D):
    """Collision matrices from CSV with header j,n,q11re,q11im,...,q22im.

    The file must contain either a single step (n identical everywhere,
    reused for all steps) or every step the run requests.
    """
    names = ("j", "n", "q11re", "q11im", "q12re", "q12im", "q21re", "q21im", "q22re", "q22im")
    rows = np.genfromtxt(path, delimiter=",", names=True, comments="#")
    got = tuple(n.lower() for n in rows.dtype.names or ())
    if got != names:
        raise ConfigError(f"q CSV must have header {','.join(names)}, got {rows.dtype.names}")
    rows.dtype.names = names
    rows = np.atleast_1d(rows)
    steps = np.unique(rows["n"].astype(int))
    by_step: dict[int, np.ndarray] = {}
    for n in steps:
        sel = rows[rows["n"].astype(int) == n]
        if sel.shape[0] != lat.n_sites:
            raise ConfigError(f"q CSV step {n} has {sel.shape[0]} rows, lattice has {lat.n_sites}")
        sel = sel[np.argsort(sel["j"])]
        q = np.empty((lat.n_sites, 2, 2), dtype=np.complex128)
        q[:, 0, 0] = sel["q11re"] + 1j * sel["q11im"]
        q[:, 0, 1] = sel["q12re"] + 1j * sel["q12im"]
        q[:, 1, 0] = sel["q21re"] + 1j * sel["q21im"]
        q[:, 1, 1] = sel["q22re"] + 1j * sel["q22im"]
        by_step[int(n)] = q

    def provider(n: int) -> np.ndarray:
        if len(by_step) == 1:
            return next(iter(by_step.values()))
        if n not in by_step:
            raise ConfigError(f"q CSV {path} has no rows for step {n}")
        return by_step[n]

    return provider


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def fmt(value: Any) -> str:
    if isinstance(value, float):
        return FLOAT_FMT % value
    return str(value)


def write_csv(path: Path, header: list[str], rows, provenance: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in (provenance or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_metadata(outdir: Path, cfg: ExperimentConfig) -> None:
    prov = cfg.provenance()
    with open(outdir / "run.meta", "w") as fh:
        for key, value in prov.items():
            fh.write(f"{key}={value}\n")
        fh.write("\n# resolved configuration\n")
        fh.write(cfg.canonical_text())


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def run(cfg: ExperimentConfig) -> Path:
    """Dispatch on run.scheme; returns the output directory."""
    outdir = Path(cfg["run"]["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    scheme = cfg["run"]["scheme"]
    if scheme in ("split", "qlb", "naive"):
        _run_flat(cfg, outdir)
    elif scheme == "equilibrium":
        _run_equilibrium(cfg, outdir)
    elif scheme == "curved":
        _run_curved(cfg, outdir)
    elif scheme == "walk2d":
        run2d(cfg, outdir)
    write_metadata(outdir, cfg)
    return outdir


def _track_and_snapshots(cfg: ExperimentConfig, lat: Lattice1D, outdir: Path):
    prov = cfg.provenance()
    summary: list[tuple] = []
    snap_stride = cfg["run"]["snapshot_stride"]
    rec_stride = cfg["run"]["record_stride"]
    n_steps = cfg["run"]["n_steps"]

    def record(step: int, f: SpinorField1D) -> None:
        if step % rec_stride == 0 or step == n_steps or step == 0:
            c, s = fields.centroid_spread(f, lat)
            summary.append((step, fields.norm(f, lat), c, s))
        if step % snap_stride == 0 or step == n_steps or step == 0:
            fields.export_density_csv(f, lat, outdir / f"density_{step:06d}.csv", prov)

    return summary, record


def _finish_1d(cfg: ExperimentConfig, lat: Lattice1D, final: SpinorField1D, summary, outdir: Path) -> None:
    write_csv(outdir / "summary.csv", ["step", "norm", "centroid", "spread"], summary, cfg.provenance())
    fields.save_checkpoint(final, lat, outdir / "final.qwlb")


def _run_flat(cfg: ExperimentConfig, outdir: Path) -> None:
    lat = build_lattice(cfg)
    mass = build_mass(cfg, lat)
    f = build_initial(cfg, lat)
    kind = solvers.SchemeKind(cfg["run"]["scheme"])
    summary, record = _track_and_snapshots(cfg, lat, outdir)
    record(0, f)
    sched = solvers.make_schedule(kind, mass, lat)
    cur = f
    for _ in range(cfg["run"]["n_steps"]):
        cur = walk.step(cur, sched, lat, threads=cfg.resolved_threads())
        record(cur.step_index, cur)
    _finish_1d(cfg, lat, cur, summary, outdir)


def _run_equilibrium(cfg: ExperimentConfig, outdir: Path) -> None:
    lat = build_lattice(cfg)
    mass = build_mass(cfg, lat)
    f = build_initial(cfg, lat)
    eq = cfg["equilibrium"]
    rcfg = equilibrium.RelaxationConfig(
        tau=eq["tau"], omega_form=equilibrium.OmegaForm.EXACT if eq["omega_form"] == "exact" else equilibrium.OmegaForm.PAPER_FORM
    )
    summary, record = _track_and_snapshots(cfg, lat, outdir)
    record(0, f)
    cur = f
    for _ in range(cfg["run"]["n_steps"]):
        cur = equilibrium.post_collide(cur, mass, lat, rcfg)
        record(cur.step_index, cur)
    diag = equilibrium.relaxation_report(mass, lat, rcfg, n=0)
    write_csv(
        outdir / "equilibrium_diag.csv",
        ["j", "n", "det_M", "has_zero_mode", "relax_residual"],
        [(j, n, d, int(z), r) for j, n, d, z, r in diag],
        cfg.provenance(),
    )
    _finish_1d(cfg, lat, cur, summary, outdir)


def _run_curved(cfg: ExperimentConfig, outdir: Path) -> None:
    lat = build_lattice(cfg)
    mass = build_mass(cfg, lat)
    ccfg = build_curved(cfg, lat, mass)
    f = build_initial(cfg, lat)
    sched = curved.curved_schedule(ccfg, lat)
    summary, record = _track_and_snapshots(cfg, lat, outdir)
    record(0, f)
    cur = f
    for _ in range(cfg["run"]["n_steps"]):
        cur = walk.step_with_residency(cur, sched, lat, threads=cfg.resolved_threads())
        record(cur.step_index, cur)
    _finish_1d(cfg, lat, cur, summary, outdir)


def run2d(cfg: ExperimentConfig, outdir: Path) -> None:
    g = cfg["grid"]
    grid = multid.Grid2D(n_z=g["n_z"], n_y=g["n_y"], dz=g["dz"], dt=g["dt"])
    exp = cfg["experiment2d"]
    params = {k: v for k, v in exp.items() if k != "kind" and v is not None}
    if exp["center_z"] is not None and exp["center_y"] is not None:
        params["center"] = (exp["center_z"], exp["center_y"])
    params.pop("center_z", None)
    params.pop("center_y", None)
    params.setdefault("seed", cfg["run"]["seed"])

    def save_snapshot(step: int, fld: multid.SpinorField2D) -> None:
        multid.save_checkpoint_2d(fld, grid, outdir / f"state_{step:06d}.qwlb")

    res = multid.run_experiment_2d(
        exp["kind"],
        params,
        grid,
        cfg["run"]["n_steps"],
        cfg["run"]["snapshot_stride"],
        threads=cfg.resolved_threads(),
        record_stride=cfg["run"]["record_stride"],
        snapshot_observer=save_snapshot,
    )
    prov = cfg.provenance()
    write_csv(
        outdir / "summary.csv",
        ["step", "norm", "centroid_z", "centroid_y", "spread"],
        [
            (s, n, c[0], c[1], sp)
            for s, n, c, sp in zip(res.steps, res.norms, res.centroids, res.spreads)
        ],
        prov,
    )
    z = grid.z()
    y = grid.y()
    for step, rho in res.snapshots:
        rows = (
            (z[iz], y[iy], rho[iz, iy])
            for iz in range(grid.n_z)
            for iy in range(grid.n_y)
        )
        write_csv(outdir / f"rho_{step:06d}.csv", ["z", "y", "rho"], rows, prov)
    multid.save_checkpoint_2d(res.final, grid, outdir / "final.qwlb")


# ---------------------------------------------------------------------------
# analysis table commands (used by the CLI)
# ---------------------------------------------------------------------------


def map_params_rows(mass: MassField, lat: Lattice1D, scheme: str, n_steps: int):
    """Rows j,n,m0,mx,my,mz,xi,alpha,beta,theta,scheme for both coin maps."""
    kind = solvers.SchemeKind(scheme)
    if kind is solvers.SchemeKind.NAIVE:
        raise ConfigError("map-params supports split and qlb schemes")
    to_params = coin.euler_from_mass_split if kind is solvers.SchemeKind.SPLIT else coin.euler_from_mass_qlb
    for n in range(n_steps):
        m0, mx, my, mz = mass.sample_row(lat, n)
        for j in range(lat.n_sites):
            p = to_params(coin.MassSample(m0[j], mx[j], my[j], mz[j], lat.dt))
            yield (j, n, m0[j], mx[j], my[j], mz[j], p.xi, p.alpha, p.beta, p.theta, kind.value)


def dispersion_rows(scheme: str, m: float, lat: Lattice1D, n_k: int):
    ks = np.linspace(0.0, math.pi / lat.dz, n_k)
    for pt in solvers.dispersion(solvers.SchemeKind(scheme), m, lat, ks):
        yield (pt.k, pt.omega_plus, pt.omega_minus)
