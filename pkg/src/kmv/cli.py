"""Command-line runner: ``kmv run <config>``, ``kmv repro <name>``, ``kmv list``.

Artifacts go to ``$KMV_OUTPUT_ROOT/<directory>`` (default root ``./kmv_output``).
Exit codes: 0 pass, 1 assertion failure, 2 configuration error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import platform
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .compression import cdmd, csdmd, fourier_basis, gaussian_measurements, rdmd, CompressionOperators
from .data import DelaySpec, delay_embed_state, load_weights, pairs_from_ensemble, pairs_from_trajectory
from .dictionaries import assemble, fourier_dictionary, linear_dictionary, rbf_dictionary
from .errors import ConfigError, DimensionError, InputError, KmvError, NumericalError, PreconditionError, RankError
from .experiments import REPRO, Table, eigen_table
from .galerkin import edmd, hankel_dmd, havok
from .numerics import numerical_rank, _svd
from .regression import ControlSnapshots, dmdc, exact_dmd, fbdmd, mrdmd, optdmd, tlsdmd
from .resdmd import complex_grid, pseudospectrum, residuals
from .structure import MANIFOLDS, measure_cdf, mpedmd, pidmd, spectral_measure
from .systems import (
    SYSTEMS,
    TrajectoryConfig,
    add_sensor_noise,
    get_system,
    sample_ensemble,
    sample_trajectory,
    simulate_linear_spectral,
    torus_system,
)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

METHODS = ("exact", "fb", "tls", "opt", "dmdc", "mrdmd", "rdmd", "cdmd", "csdmd", "edmd", "resdmd",
           "hankel", "havok", "pidmd", "mpedmd")

# section -> key -> (type, default); a default of ... marks a required key
SCHEMA = {
    "system": {"name": (str, ...), "n": (int, 32), "pairs": (int, 5), "seed": (int, 0), "input": (str, "none")},
    "sampling": {"dt": (float, ...), "steps": (int, ...), "burn_in": (int, 0), "substeps": (int, 1),
                 "seed": (int, 0), "initial": (str, ""), "ensemble": (int, 0), "weights": (str, "")},
    "embedding": {"delays": (int, 1), "stride": (int, 1), "observable": (int, 0)},
    "dictionary": {"key": (str, "linear")},
    "method": {"name": (str, ...), "rank": (int, 0), "branch": (str, "auto"), "levels": (int, 3),
               "rho": (float, 1.0), "compress_dim": (int, 0), "sparsity": (int, 0), "power": (int, 2),
               "oversample": (int, 10), "seed": (int, 0), "manifold": (str, "orthogonal"), "eps": (float, 0.05),
               "grid": (int, 0), "box": (str, "-1.5,1.5,-1.5,1.5"), "window": (int, 10),
               "eigenfunctions": (int, 4)},
    "noise": {"level": (float, 0.0), "seed": (int, 0)},
    "outputs": {"directory": (str, ...)},
}
REQUIRED_SECTIONS = ("system", "sampling", "method", "outputs")
# config spelling -> fbdmd branch policy
BRANCHES = {"auto": "auto", "principal": "positive-real", "positive-real": "positive-real", "nearest": "nearest"}


def output_root() -> Path:
    return Path(os.environ.get("KMV_OUTPUT_ROOT", "kmv_output"))


def _convert(section, key, raw, kind):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def load_config(path) -> dict:
    """Parse and validate an INI experiment config; nothing is computed here."""
    text = Path(path).read_text(encoding="utf-8") if Path(path).exists() else None
    if text is None:
        raise ConfigError(f"config file {path} not found")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    unknown = [s for s in cp.sections() if s not in SCHEMA]
    if unknown:
        raise ConfigError(f"unknown section(s) {unknown}; allowed {list(SCHEMA)}")
    cfg = {}
    for section, spec in SCHEMA.items():
        if section in REQUIRED_SECTIONS and not cp.has_section(section):
            raise ConfigError(f"missing section [{section}]")
        given = dict(cp.items(section)) if cp.has_section(section) else {}
        bad = sorted(set(given) - set(spec))
        if bad:
            raise ConfigError(f"unknown key(s) {bad} in [{section}]; allowed {sorted(spec)}")
        out = {}
        for key, (kind, default) in spec.items():
            if key in given:
                out[key] = _convert(section, key, given[key], kind)
            elif default is ...:
                raise ConfigError(f"missing required key [{section}] {key}")
            else:
                out[key] = default
        cfg[section] = out
    _validate(cfg)
    cfg["_text"] = text
    return cfg


def _validate(cfg):
    sysname, method = cfg["system"]["name"], cfg["method"]["name"]
    if sysname not in SYSTEMS and sysname != "torus":
        raise ConfigError(f"unknown system {sysname!r}; choose from {sorted(SYSTEMS) + ['torus']}")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {list(METHODS)}")
    if cfg["system"]["input"] not in ("none", "gaussian"):
        raise ConfigError("[system] input must be 'none' or 'gaussian'")
    if method == "dmdc" and (sysname != "torus" or cfg["system"]["input"] != "gaussian"):
        raise ConfigError("method dmdc needs system torus with input = gaussian")
    if method == "pidmd" and cfg["method"]["manifold"] not in MANIFOLDS:
        raise ConfigError(f"unknown manifold {cfg['method']['manifold']!r}; choose from {list(MANIFOLDS)}")
    if method == "fb" and cfg["method"]["branch"] not in BRANCHES:
        raise ConfigError(f"[method] branch must be one of {sorted(BRANCHES)}")
    if method in ("cdmd", "csdmd") and cfg["method"]["compress_dim"] < 1:
        raise ConfigError(f"method {method} needs [method] compress_dim >= 1")
    if method == "csdmd" and cfg["method"]["sparsity"] < 1:
        raise ConfigError("method csdmd needs [method] sparsity >= 1")
    key = cfg["dictionary"]["key"]
    head = key.split(":")[0]
    if head not in ("linear", "rbf", "fourier", "delay"):
        raise ConfigError(f"unknown dictionary key {key!r}; use linear, rbf:N, fourier:K or delay")
    if head in ("rbf", "fourier"):
        parts = key.split(":")
        if len(parts) != 2 or not parts[1].isdigit():
            raise ConfigError(f"dictionary key {key!r} needs an integer size, e.g. {head}:100")
    try:
        _parse_box(cfg["method"]["box"])
        TrajectoryConfig(cfg["sampling"]["dt"], cfg["sampling"]["steps"], cfg["sampling"]["burn_in"])
        DelaySpec(cfg["embedding"]["delays"], cfg["embedding"]["stride"])
    except (KmvError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg["noise"]["level"] < 0:
        raise ConfigError("[noise] level must be nonnegative")


def _parse_box(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 4 or vals[0] >= vals[1] or vals[2] >= vals[3]:
        raise ConfigError(f"box {text!r} must be xmin,xmax,ymin,ymax with min < max")
    return tuple(vals)


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")
        self.stage, self.exc = stage, exc


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except KmvError as exc:
        raise StageError(name, exc) from exc


def _generate(cfg):
    s, smp = cfg["system"], cfg["sampling"]
    inputs = None
    if s["name"] == "torus":
        sysobj, x0 = torus_system(s["n"], s["pairs"], smp["dt"], seed=s["seed"])
        rng = np.random.default_rng(smp["seed"])
        u = rng.standard_normal(smp["steps"]) if s["input"] == "gaussian" else np.zeros(smp["steps"])
        inputs = u[None, :] if s["input"] == "gaussian" else None
        return simulate_linear_spectral(sysobj, x0, u)[None], inputs
    ode = get_system(s["name"])
    if smp["ensemble"] > 0:
        rng = np.random.default_rng(smp["seed"])
        starts = np.stack([ode.initial(rng) for _ in range(smp["ensemble"])], axis=1)
        return sample_ensemble(ode, starts, smp["dt"], smp["steps"], smp["substeps"]), None
    initial = np.array([float(v) for v in smp["initial"].split(",")]) if smp["initial"] else None
    tc = TrajectoryConfig(smp["dt"], smp["steps"], smp["burn_in"], initial, smp["seed"])
    return sample_trajectory(ode, tc, smp["substeps"])[None], None


def _pair(cfg, trajs):
    emb = cfg["embedding"]
    weights = None
    if cfg["sampling"]["weights"]:
        weights = load_weights(cfg["sampling"]["weights"])
    if emb["delays"] > 1:
        if trajs.shape[0] != 1:
            raise ConfigError("delay embedding needs a single trajectory (ensemble = 0)")
        return delay_embed_state(trajs[0], DelaySpec(emb["delays"], emb["stride"]), weights)
    if trajs.shape[0] == 1:
        return pairs_from_trajectory(trajs[0], weights)
    return pairs_from_ensemble(trajs, weights)


def _dictionary(cfg, pair):
    key = cfg["dictionary"]["key"]
    head, _, size = key.partition(":")
    if head in ("linear", "delay"):
        return linear_dictionary(pair.d)
    if head == "rbf":
        return rbf_dictionary(pair.X, int(size), seed=cfg["method"]["seed"])
    return fourier_dictionary(int(size))


def _rank(m, X):
    if m["rank"] > 0:
        return m["rank"]
    s = _svd(X, compute_uv=False)
    return max(numerical_rank(s, X.shape), 1)


def _nonzero(lam):
    lam = np.asarray(lam)
    scale = np.max(np.abs(lam), initial=0.0)
    return lam[np.abs(lam) > 1e-10 * scale] if scale > 0 else lam


def _method(cfg, trajs, inputs, pair):
    m, dt = cfg["method"], cfg["sampling"]["dt"]
    name = m["name"]
    tables, metrics = {}, {}
    if name in ("exact", "fb", "tls"):
        fn = {"exact": exact_dmd, "fb": lambda p, r: fbdmd(p, r, BRANCHES[m["branch"]]), "tls": tlsdmd}[name]
        res = fn(pair, _rank(m, pair.X))
        tables["eigs"] = eigen_table(_nonzero(res.eigenvalues), dt)
    elif name == "opt":
        X = trajs[0]
        res = optdmd(X, dt * np.arange(X.shape[1]), _rank(m, X))
        tables["eigs"] = eigen_table(np.exp(res.eigenvalues * dt), dt)
    elif name == "dmdc":
        r = _rank(m, pair.Y)
        res, Bt = dmdc(ControlSnapshots(pair.X, pair.Y, inputs), min(r + inputs.shape[0], pair.d), r)
        tables["eigs"] = eigen_table(_nonzero(res.eigenvalues), dt)
    elif name == "mrdmd":
        tree = mrdmd(trajs[0], dt, m["levels"], m["rho"], m["rank"] or None)
        rows = [(n.level, n.bin, e.real, e.imag) for n in tree.walk() for e in n.eta]
        tables["mrdmd_modes"] = Table(["level", "bin", "eta_re", "eta_im"], np.array(rows).reshape(-1, 4))
    elif name == "rdmd":
        res = rdmd(pair, _rank(m, pair.X), m["oversample"], m["power"], seed=m["seed"])
        tables["eigs"] = eigen_table(res.eigenvalues, dt)
    elif name in ("cdmd", "csdmd"):
        C = gaussian_measurements(m["compress_dim"], pair.d, seed=m["seed"])
        if name == "cdmd":
            res = cdmd(pair, C, m["rank"] or min(m["compress_dim"], pair.M))
        else:
            ops = CompressionOperators(C, fourier_basis(pair.d), "gaussian-fourier")
            r = m["rank"] or min(m["compress_dim"], pair.M)
            res = csdmd(C @ pair.X, C @ pair.Y, ops, r, m["sparsity"])
            metrics["flagged_modes"] = list(res.info["flagged"])
        tables["eigs"] = eigen_table(res.eigenvalues, dt)
    elif name in ("edmd", "resdmd", "mpedmd"):
        mats = assemble(pair, _dictionary(cfg, pair))
        if name == "mpedmd":
            res = mpedmd(mats)
            tables["mpedmd_eigs"] = eigen_table(res.eigenvalues, dt)
            g = np.zeros(mats.N)
            g[cfg["embedding"]["observable"]] = 1.0
            mu = spectral_measure(res, g)
            theta = np.linspace(-np.pi, np.pi, 1001)[:-1]
            tables["measure_cdf"] = Table(["theta", "F"], np.column_stack([theta, measure_cdf(mu, theta)]))
        else:
            res = edmd(mats)
            tables["eigs"] = eigen_table(res.eigenvalues, dt)
            k = min(m["eigenfunctions"], mats.N)
            vals = mats.PsiX @ res.right_vectors[:, :k]
            cols = [pair.X[i] for i in range(pair.d)]
            head = [f"x{i}" for i in range(pair.d)]
            for j in range(k):
                cols += [vals[:, j].real, vals[:, j].imag]
                head += [f"re_phi{j}", f"im_phi{j}"]
            tables["eigenfunctions"] = Table(head, np.column_stack(cols))
            if name == "resdmd":
                rep = residuals(mats, res.eigenvalues, res.right_vectors)
                tables["eigs_residuals"] = Table(["re", "im", "res"], np.column_stack(
                    [rep.eigenvalues.real, rep.eigenvalues.imag, rep.residuals]))
                metrics["filtered"] = int(np.sum(rep.residuals <= m["eps"]))
                if m["grid"] > 0:
                    z = complex_grid(_parse_box(m["box"]), m["grid"])
                    ps = pseudospectrum(mats, z, m["eps"])
                    tables["pseudospec"] = Table(["re_z", "im_z", "tau"], np.column_stack([z.real, z.imag, ps.tau]))
    elif name in ("hankel", "havok"):
        series = trajs[0][cfg["embedding"]["observable"]]
        if name == "hankel":
            res = hankel_dmd(series, m["window"], m["rank"] or m["window"])
            tables["eigs"] = eigen_table(res.eigenvalues, dt)
        else:
            model = havok(series, m["window"], m["rank"] or min(15, m["window"]), dt)
            r = model.coordinates.shape[1]
            tables["delay_coordinates"] = Table([f"v{j + 1}" for j in range(r)], model.coordinates)
            tables["havok_model"] = Table([f"c{j + 1}" for j in range(r)], model.closure)
            metrics.update(forced_error=model.forced_error, closure_error=model.closure_error)
    elif name == "pidmd":
        K, res = pidmd(pair, m["manifold"])
        tables["eigs"] = eigen_table(res.eigenvalues, dt)
        tables["operator"] = Table([f"k{j}" for j in range(K.shape[1])], np.real_if_close(K).real)
    return tables, metrics


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_table(path, table: Table) -> None:
    """CSV with a header line and values at 17 significant digits."""
    rows = np.atleast_2d(np.asarray(table.rows, dtype=float))
    if rows.size == 0:
        rows = rows.reshape(0, len(table.header))
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=",".join(table.header), comments="")


def _write_artifacts(target: Path, tables: dict, manifest: dict) -> Path:
    """Write into a staging directory and move it into place; nothing is left behind on failure."""
    target.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=target.parent))
    try:
        files = {}
        for name, table in sorted(tables.items()):
            p = stage / f"{name}.csv"
            write_table(p, table)
            files[p.name] = _sha256(p)
        manifest["files"] = files
        (stage / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
        if target.exists():
            shutil.rmtree(target)
        stage.rename(target)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return target


def _jsonable(v):
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def _versions():
    return {"kmv": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(config_path) -> Path:
    """Execute a config and return the artifact directory."""
    cfg = load_config(config_path)
    t0 = time.perf_counter()
    trajs, inputs = _stage("generate", _generate, cfg)
    if cfg["noise"]["level"] > 0:
        trajs = np.stack([_stage("noise", add_sensor_noise, tr, cfg["noise"]["level"], cfg["noise"]["seed"] + i)
                          for i, tr in enumerate(trajs)])
    pair = _stage("snapshots", _pair, cfg, trajs)
    tables, metrics = _stage("estimate", _method, cfg, trajs, inputs, pair)
    manifest = {
        "config_sha256": hashlib.sha256(cfg["_text"].encode()).hexdigest(),
        "seeds": {"system": cfg["system"]["seed"], "sampling": cfg["sampling"]["seed"],
                  "noise": cfg["noise"]["seed"], "method": cfg["method"]["seed"]},
        "versions": _versions(),
        "metrics": metrics,
        "wall_time": time.perf_counter() - t0,
    }
    return _stage("write", _write_artifacts, output_root() / cfg["outputs"]["directory"], tables, manifest)


def repro(name: str):
    """Run a named reproduction; returns ``(report, directory)``."""
    if name not in REPRO:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(REPRO)}")
    report = REPRO[name]()
    manifest = {
        "experiment": name,
        "passed": report.passed,
        "checks": [vars(c) for c in report.checks],
        "metrics": report.metrics,
        "seeds": report.seeds,
        "versions": _versions(),
        "wall_time": report.wall_time,
    }
    out = _write_artifacts(output_root() / name, report.tables, manifest)
    return report, out


def _exit_code(exc) -> int:
    inner = exc.exc if isinstance(exc, StageError) else exc
    if isinstance(inner, (NumericalError, RankError, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    if isinstance(inner, (ConfigError, PreconditionError, DimensionError, InputError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kmv", description="Koopman mode decomposition experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_rep = sub.add_parser("repro", help="run a pinned reproduction")
    p_rep.add_argument("name")
    sub.add_parser("list", help="list reproductions, systems and methods")
    args = parser.parse_args(argv)

    if args.command == "list":
        print("reproductions: " + ", ".join(REPRO))
        print("systems: " + ", ".join(sorted(SYSTEMS) + ["torus"]))
        print("methods: " + ", ".join(METHODS))
        return EXIT_PASS
    try:
        if args.command == "run":
            out = run(args.config)
            print(f"artifacts written to {out}")
            return EXIT_PASS
        report, out = repro(args.name)
        print(report.summary())
        print(f"artifacts written to {out}")
        return EXIT_PASS if report.passed else EXIT_FAIL
    except (KmvError, StageError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
