"""Command-line interface: certification, tables, studies, and simulations.

Every subcommand reads a JSON config, writes CSV/JSON artifacts plus a
``manifest.json`` (resolved config and versions) into the output
directory, and is byte-deterministic for a fixed config and seed.

Exit codes: 0 success, 1 verification failure, 2 config error,
3 runtime (solver) failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .compkernels import ModifiedKernelTable, build_complementary, verify_identities
from .dgscert import dgs_check, min_eigenvalue, sigma_conjecture_scan
from .kernels import METHOD_NAMES, appendix_audit, kernel_table, psi_chain
from .meshes import MeshSpec, build_mesh, check_ratio_condition, rg, rstar
from .solvers import (
    FixedPointError,
    SimulationConfig,
    convergence_study,
    run_simulation,
)
from .spectral import save_field

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


class ConfigError(ValueError):
    pass


def thread_count() -> int:
    """Worker cap: FRACSTEP_THREADS if set, else the CPU count."""
    raw = os.environ.get("FRACSTEP_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"FRACSTEP_THREADS must be an integer, got {raw!r}")
        if n < 1:
            raise ConfigError("FRACSTEP_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    if x is None:
        return ""
    return str(x)


def write_csv(path: Path, header: list[str], rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _need(cfg: dict, key: str, where: str = "config"):
    if key not in cfg:
        raise ConfigError(f"{where} is missing required field {key!r}")
    return cfg[key]


def _mesh_from_config(cfg: dict, seed_override=None) -> tuple[MeshSpec, dict]:
    spec_dict = dict(_need(cfg, "mesh"))
    if seed_override is not None:
        spec_dict["seed"] = seed_override
    try:
        spec = MeshSpec.from_dict(spec_dict)
    except ValueError as exc:
        raise ConfigError(f"bad mesh spec: {exc}") from exc
    return spec, spec_dict


def write_manifest(out: Path, command: str, resolved: dict):
    manifest = {
        "command": command,
        "config": resolved,
        "versions": {"fracstep": __version__, "numpy": np.__version__},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _mesh_rows(mesh):
    return [(k, t, tau, r) for (k, t, tau, r) in mesh.to_rows()]


def cmd_kernels(cfg: dict, out: Path, args) -> int:
    """Dump a kernel table (and optional admissibility curves) as CSV."""
    beta = _need(cfg, "beta")
    spec, resolved_mesh = _mesh_from_config(cfg, args.seed)
    method = cfg.get("method", "auto")
    tol = args.tol if args.tol is not None else cfg.get("tol", 1e-14)
    mesh = build_mesh(spec)
    table = kernel_table(mesh, beta, method=method, tol=tol)
    rows = []
    for n in range(1, table.n + 1):
        row = table.rows[n - 1]
        codes = table.method_codes[n - 1]
        for k in range(1, n + 1):
            rows.append((n, k, float(row[n - k]), METHOD_NAMES[int(codes[n - k])]))
    write_csv(out / "kernels.csv", ["n", "k", "a", "method"], rows)
    write_csv(out / "mesh.csv", ["k", "t_k", "tau_k", "r_k"], _mesh_rows(mesh))
    resolved = {"beta": beta, "mesh": resolved_mesh, "method": method, "tol": tol}
    if "curves" in cfg:
        cur = cfg["curves"]
        betas = cur.get("betas", [0.3, 0.7])
        r = np.geomspace(cur.get("r_min", 0.25), cur.get("r_max", 4.0),
                         cur.get("points", 200))
        header = ["r"]
        cols = [r]
        for b in betas:
            header += [f"rstar_beta{b:g}", f"rg_beta{b:g}"]
            cols += [rstar(r, b), rg(r, b)]
        write_csv(out / "ratio_curves.csv", header, zip(*cols))
        resolved["curves"] = {"betas": betas, "r_min": float(r[0]),
                              "r_max": float(r[-1]), "points": int(r.size)}
    write_manifest(out, "kernels", resolved)
    return EXIT_OK


def cmd_verify(cfg: dict, out: Path, args) -> int:
    """Certify identities, gradient structure, and kernel properties."""
    beta = _need(cfg, "beta")
    spec, resolved_mesh = _mesh_from_config(cfg, args.seed)
    tol_identity = cfg.get("tol_identity", 1e-11)
    tol_dgs = cfg.get("tol_dgs", 1e-10)
    n_sequences = cfg.get("sequences", 20)
    inject = bool(cfg.get("inject_defect", False))
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    mesh = build_mesh(spec)

    report: dict = {
        "beta": beta,
        "mesh": resolved_mesh,
        "ratio_condition": {},
        "tolerances": {"identity": tol_identity, "dgs": tol_dgs},
    }
    ok = True
    for rule in ("rstar", "rg"):
        rr = check_ratio_condition(mesh, beta, rule)
        report["ratio_condition"][rule] = {
            "passed": rr.passed,
            "checked": rr.checked,
            "first_violation": rr.first_violation,
        }
    # certification runs treat the proven bound as a hard requirement
    if not report["ratio_condition"]["rstar"]["passed"]:
        ok = False

    table = kernel_table(mesh, beta, method=cfg.get("method", "auto"))
    chain_slack = np.inf
    for n in range(2, table.n + 1):
        row = table.rows[n - 1]
        diffs = np.concatenate([[(1.0 + beta) * row[0] - row[1]], -np.diff(row[1:])])
        chain_slack = min(chain_slack, float(diffs.min()), float(row.min()))
    report["row_chain_min_slack"] = None if table.n < 2 else chain_slack
    if table.n >= 2 and chain_slack <= 0.0:
        ok = False

    psi_ok = True
    for n in range(3, min(table.n, 60) + 1):
        psi, psi1 = psi_chain(mesh, beta, n)
        if abs(psi[0] - psi1) > 1e-12 * max(1.0, abs(psi1)):
            psi_ok = False
        if np.any(np.diff(psi) <= -1e-13) or psi[-1] >= 1.0 + 1e-13:
            psi_ok = False
    report["psi_chain_ok"] = psi_ok
    ok = ok and psi_ok

    mod = ModifiedKernelTable(table, sigma_min=float(cfg.get("sigma_min", 0.0)))
    comp = build_complementary(mod)
    if inject:
        comp.theta[comp.n - 1][comp.n // 2] *= 1.0 + 1e-6
    idrep = verify_identities(comp, tol=tol_identity, seed=seed)
    report["identities"] = idrep.to_dict()
    ok = ok and idrep.passed

    rng = np.random.default_rng(seed)
    worst_dgs = 0.0
    rate_min = np.inf
    scale = 0.5 / table.a0()  # level-sized draws keep the check conditioned
    for _ in range(n_sequences):
        w = rng.standard_normal(mesh.n) * scale
        for n in (1, max(1, mesh.n // 2), mesh.n):
            b = dgs_check(table, comp, w[:n])
            worst_dgs = max(worst_dgs, b.rel_residual)
            rate_min = min(rate_min, b.rate_term)
    report["dgs_max_rel_residual"] = worst_dgs
    report["dgs_rate_min"] = rate_min
    ok = ok and worst_dgs <= tol_dgs and rate_min >= -1e-13

    audits = appendix_audit()
    report["inequality_audits"] = {
        name: {"passed": rep.passed, "min_slack": rep.min_slack,
               "checked": rep.checked}
        for name, rep in audits.items()
    }
    ok = ok and all(rep.passed for rep in audits.values())

    report["passed"] = bool(ok)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(out, "verify", {
        "beta": beta, "mesh": resolved_mesh, "seed": seed,
        "sequences": n_sequences, "inject_defect": inject,
        "tol_identity": tol_identity, "tol_dgs": tol_dgs,
    })
    print(json.dumps(report["identities"]["residuals"], sort_keys=True))
    print(f"dgs_max_rel_residual={worst_dgs:.3e} passed={ok}")
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def cmd_eig(cfg: dict, out: Path, args) -> int:
    """Minimum-eigenvalue tables for graded or random mesh families."""
    mode = cfg.get("mode", "graded-table")
    tol = args.tol if args.tol is not None else cfg.get("tol", 1e-12)
    rows = []
    if mode == "graded-table":
        betas = cfg.get("betas", [0.5])
        gammas = _need(cfg, "gammas")
        ns = _need(cfg, "ns")
        for beta in betas:
            for gamma in gammas:
                for n in ns:
                    mesh = build_mesh(
                        MeshSpec(kind="graded", n=n, horizon=1.0, gamma=gamma)
                    )
                    rep = min_eigenvalue(
                        kernel_table(mesh, beta, method="closed"), tol=tol,
                        mesh_label=f"graded:{gamma:g}",
                    )
                    rows.append(("graded", n, beta, gamma, "", rep.lam_min,
                                 rep.sigma_beta, rep.margin))
    elif mode == "random-scan":
        betas = _need(cfg, "betas")
        ns = _need(cfg, "ns")
        seeds = cfg.get("seeds", 50)
        base = args.seed if args.seed is not None else cfg.get("seed", 0)
        specs = []
        for beta in betas:
            for n in ns:
                for s in range(seeds):
                    specs.append((MeshSpec(kind="random", n=n, horizon=1.0,
                                           seed=base + 7919 * s), beta))
        reports = sigma_conjecture_scan(specs, tol=tol, threads=thread_count())
        for (spec, beta), rep in zip(specs, reports):
            rows.append(("random", spec.n, beta, "", spec.seed, rep.lam_min,
                         rep.sigma_beta, rep.margin))
    else:
        raise ConfigError(f"unknown eig mode {mode!r}")
    write_csv(out / "eig.csv",
              ["mesh", "n", "beta", "gamma", "seed", "lambda_min", "sigma", "margin"],
              rows)
    write_manifest(out, "eig", {"mode": mode, "tol": tol, **{
        k: cfg[k] for k in ("betas", "gammas", "ns", "seeds") if k in cfg}})
    violations = [r for r in rows if r[7] < 0.0]
    print(f"eig: {len(rows)} instances, {len(violations)} bound violations")
    return EXIT_OK


def cmd_converge(cfg: dict, out: Path, args) -> int:
    """Manufactured-solution convergence table and fitted orders."""
    model = _need(cfg, "model")
    order = _need(cfg, "order")
    sigma = _need(cfg, "sigma")
    gammas = _need(cfg, "gammas")
    ns = _need(cfg, "ns")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    fp_tol = args.tol if args.tol is not None else cfg.get("fp_tol", 1e-12)
    res = convergence_study(
        model, order, sigma, gammas, ns,
        eps2=cfg.get("eps2", 0.5), kappa=cfg.get("kappa", 1.0),
        grid_n=cfg.get("grid_n", 32), seed=seed,
        mesh_kind=cfg.get("mesh_kind", "graded"),
        fp_tol=fp_tol,
    )
    write_csv(out / "errors.csv", ["model", "sigma", "gamma", "n", "error"],
              [(model, sigma, g, n, e) for (g, n, e) in res.rows])
    write_csv(out / "slopes.csv",
              ["model", "sigma", "gamma", "fitted_order", "expected_order"],
              [(model, sigma, g, res.slopes[g], res.expected[g]) for g in res.slopes])
    write_manifest(out, "converge", {
        "model": model, "order": order, "sigma": sigma, "gammas": gammas,
        "ns": ns, "seed": seed, "mesh_kind": cfg.get("mesh_kind", "graded"),
    })
    for g in res.slopes:
        print(f"gamma={g:g}: fitted {res.slopes[g]:.3f} expected {res.expected[g]:.3f}")
    return EXIT_OK


def cmd_simulate(cfg: dict, out: Path, args) -> int:
    """Dynamics run with per-step energy records and optional snapshots."""
    known = {f.name for f in SimulationConfig.__dataclass_fields__.values()}
    extra = set(cfg) - known
    if extra:
        raise ConfigError(f"unknown simulate fields: {sorted(extra)}")
    merged = dict(cfg)
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.tol is not None:
        merged["fp_tol"] = args.tol
    if "snapshot_times" in merged:
        merged["snapshot_times"] = tuple(merged["snapshot_times"])
    try:
        sim_cfg = SimulationConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad simulate config: {exc}") from exc
    result = run_simulation(sim_cfg)
    write_csv(
        out / "energy.csv",
        ["n", "t", "tau", "E", "E_mod", "rate", "law_residual", "fp_iters"],
        [(r.n, r.t, r.tau, r.energy, r.energy_mod, r.rate_term,
          r.law_residual, r.fp_iters) for r in result.records],
    )
    from .meshes import TimeMesh

    write_csv(out / "mesh.csv", ["k", "t_k", "tau_k", "r_k"],
              _mesh_rows(TimeMesh.from_levels(result.levels)))
    for t_snap, fld in result.snapshots.items():
        save_field(out / f"field_t{t_snap:g}.bin", fld)
    write_manifest(out, "simulate", {**merged,
                                     "snapshot_times": list(sim_cfg.snapshot_times)})
    em = result.energies_mod
    drops = np.diff(em)
    print(f"steps={len(result.records) - 1} fp_iters_max={result.fp_iters_max} "
          f"E_mod: {em[0]:.6g} -> {em[-1]:.6g} max_increase={drops.max():.3e}")
    return EXIT_OK


_COMMANDS = {
    "kernels": cmd_kernels,
    "verify": cmd_verify,
    "eig": cmd_eig,
    "converge": cmd_converge,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fracstep",
        description="Variable-step fractional time integration toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--tol", type=float, default=None, help="tolerance override")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except FixedPointError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
